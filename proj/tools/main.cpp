#include "commands.hpp"

int main(int argc, char** argv) { return bkd::cli::run_cli(argc, argv); }
