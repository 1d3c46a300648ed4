#include "bkd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "bkd/format.hpp"

namespace bkd {

ProfileKind parse_profile_kind(std::string_view s) {
  if (s == "exponential") return ProfileKind::kExponential;
  if (s == "step") return ProfileKind::kStep;
  throw std::invalid_argument("unknown imbalance profile '" + std::string(s) +
                              "' (expected exponential|step)");
}

std::string_view to_string(ProfileKind k) {
  return k == ProfileKind::kExponential ? "exponential" : "step";
}

ClassCounts make_longtail_counts(const ImbalanceProfile& profile) {
  const auto c = profile.num_classes;
  if (c < 1) throw std::invalid_argument("make_longtail_counts: need at least one class");
  if (!(profile.rho >= 1.0) || !std::isfinite(profile.rho)) {
    throw std::invalid_argument("make_longtail_counts: rho must be >= 1");
  }
  if (profile.n_max < 1) throw std::invalid_argument("make_longtail_counts: n_max must be >= 1");
  if (c < 2 && profile.rho > 1.0) {
    throw std::invalid_argument("make_longtail_counts: an imbalance ratio needs at least two classes");
  }

  const auto n_max = static_cast<double>(profile.n_max);
  ClassCounts counts(c);
  if (profile.kind == ProfileKind::kExponential) {
    for (std::size_t i = 0; i < c; ++i) {
      const double frac = c == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(c - 1);
      counts[i] = std::max<std::int64_t>(1, std::llround(n_max * std::pow(profile.rho, -frac)));
    }
  } else {
    const std::size_t head = (c + 1) / 2;
    const auto tail = std::max<std::int64_t>(1, std::llround(n_max / profile.rho));
    for (std::size_t i = 0; i < c; ++i) counts[i] = i < head ? profile.n_max : tail;
  }
  std::sort(counts.begin(), counts.end(), std::greater<>());
  return counts;
}

LabeledDataset::LabeledDataset(std::size_t num_classes, std::size_t dim)
    : num_classes_(num_classes), dim_(dim) {
  if (num_classes < 1) throw std::invalid_argument("LabeledDataset: need at least one class");
  if (dim < 1) throw std::invalid_argument("LabeledDataset: feature dimension must be >= 1");
}

void LabeledDataset::push_back(std::span<const double> x, std::size_t label) {
  if (x.size() != dim_) {
    throw std::invalid_argument("LabeledDataset: row has " + std::to_string(x.size()) +
                                " features, expected " + std::to_string(dim_));
  }
  if (label >= num_classes_) {
    throw std::invalid_argument("LabeledDataset: label " + std::to_string(label) +
                                " out of range for " + std::to_string(num_classes_) + " classes");
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("LabeledDataset: non-finite feature");
  }
  features_.insert(features_.end(), x.begin(), x.end());
  labels_.push_back(label);
}

ClassCounts LabeledDataset::class_counts() const {
  ClassCounts counts(num_classes_, 0);
  for (auto y : labels_) ++counts[y];
  return counts;
}

namespace {

std::vector<Vector> class_means(std::size_t num_classes, std::size_t dim, double separation, Rng& rng) {
  std::vector<Vector> means;
  means.reserve(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    Vector v(dim);
    for (double& x : v) x = rng.normal();
    if (c < dim) {
      for (const auto& u : means) {
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += v[k] * u[k];
        for (std::size_t k = 0; k < dim; ++k) v[k] -= dot * u[k];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    means.push_back(std::move(v));
  }
  for (auto& m : means) {
    for (double& x : m) x *= separation;
  }
  return means;
}

void fill_class(LabeledDataset& out, const Vector& mean, std::size_t label, std::int64_t n, Rng& rng) {
  Vector x(mean.size());
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < mean.size(); ++k) x[k] = mean[k] + rng.normal();
    out.push_back(x, label);
  }
}

}  // namespace

SyntheticSplit synth_gaussian_mixture(const ClassCounts& counts, std::size_t dim, double separation,
                                      std::uint64_t seed, std::size_t per_class_test) {
  if (dim < 2) throw std::invalid_argument("synth_gaussian_mixture: dimension must be >= 2");
  if (counts.empty()) throw std::invalid_argument("synth_gaussian_mixture: no classes");
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw std::invalid_argument("synth_gaussian_mixture: separation must be finite and >= 0");
  }
  if (per_class_test < 1) throw std::invalid_argument("synth_gaussian_mixture: per_class_test must be >= 1");
  for (auto n : counts) {
    if (n < 1) throw std::invalid_argument("synth_gaussian_mixture: class counts must be >= 1");
  }

  Rng rng(seed);
  const auto means = class_means(counts.size(), dim, separation, rng);
  SyntheticSplit split{LabeledDataset(counts.size(), dim), LabeledDataset(counts.size(), dim)};
  for (std::size_t c = 0; c < counts.size(); ++c) fill_class(split.train, means[c], c, counts[c], rng);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    fill_class(split.test, means[c], c, static_cast<std::int64_t>(per_class_test), rng);
  }
  return split;
}

LabeledDataset downsample_to_profile(const LabeledDataset& data, const ClassCounts& counts,
                                     std::uint64_t seed) {
  if (counts.size() != data.num_classes()) {
    throw std::invalid_argument("downsample_to_profile: " + std::to_string(counts.size()) +
                                " counts for " + std::to_string(data.num_classes()) + " classes");
  }
  std::vector<std::vector<std::size_t>> by_class(data.num_classes());
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.label(i)].push_back(i);

  Rng rng(seed);
  std::vector<char> keep(data.size(), 0);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (counts[c] < 0 || static_cast<std::size_t>(counts[c]) > rows.size()) {
      throw std::invalid_argument("downsample_to_profile: class " + std::to_string(c) + " requests " +
                                  std::to_string(counts[c]) + " rows but only " +
                                  std::to_string(rows.size()) + " are available");
    }
    const auto want = static_cast<std::size_t>(counts[c]);
    // Partial Fisher-Yates: the first `want` slots become a uniform sample.
    for (std::size_t i = 0; i < want; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.uniform_index(rows.size() - i));
      std::swap(rows[i], rows[j]);
      keep[rows[i]] = 1;
    }
  }

  LabeledDataset out(data.num_classes(), data.dim());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (keep[i]) out.push_back(data.row(i), data.label(i));
  }
  return out;
}

std::string_view to_string(Subset s) {
  switch (s) {
    case Subset::kMany: return "many";
    case Subset::kMedium: return "medium";
    case Subset::kFew: return "few";
  }
  return "?";
}

SubsetTags subset_tags(const ClassCounts& counts, std::int64_t many_thresh, std::int64_t few_thresh) {
  if (!(many_thresh > few_thresh && few_thresh > 0)) {
    throw std::invalid_argument("subset_tags: need many_thresh > few_thresh > 0");
  }
  SubsetTags out;
  out.many_thresh = many_thresh;
  out.few_thresh = few_thresh;
  out.tags.reserve(counts.size());
  for (auto n : counts) {
    if (n > many_thresh) {
      out.tags.push_back(Subset::kMany);
    } else if (n >= few_thresh) {
      out.tags.push_back(Subset::kMedium);
    } else {
      out.tags.push_back(Subset::kFew);
    }
  }
  return out;
}

void write_dataset(std::ostream& os, const LabeledDataset& data) {
  os << "longtail-csv v1, C=" << data.num_classes() << ", d=" << data.dim() << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << data.label(i);
    for (double v : data.row(i)) os << ',' << format_double(v);
    os << '\n';
  }
}

void write_dataset(const std::filesystem::path& path, const LabeledDataset& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_dataset(os, data);
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

namespace {

std::int64_t header_field(std::string_view part, std::string_view key) {
  part = trim(part);
  if (part.substr(0, key.size()) != key) {
    throw std::runtime_error("longtail-csv: expected '" + std::string(key) + "<int>' in header");
  }
  return parse_int(part.substr(key.size()));
}

}  // namespace

LabeledDataset read_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("longtail-csv: missing header");
  std::string_view header = trim(line);
  const auto c1 = header.find(',');
  const auto c2 = header.find(',', c1 == std::string_view::npos ? c1 : c1 + 1);
  if (c1 == std::string_view::npos || c2 == std::string_view::npos ||
      trim(header.substr(0, c1)) != "longtail-csv v1") {
    throw std::runtime_error("longtail-csv: bad header '" + line + "'");
  }
  const auto num_classes = header_field(header.substr(c1 + 1, c2 - c1 - 1), "C=");
  const auto dim = header_field(header.substr(c2 + 1), "d=");
  if (num_classes < 1 || dim < 1) throw std::runtime_error("longtail-csv: C and d must be positive");

  LabeledDataset data(static_cast<std::size_t>(num_classes), static_cast<std::size_t>(dim));
  Vector x(static_cast<std::size_t>(dim));
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view rest = trim(line);
    if (rest.empty()) continue;
    try {
      auto comma = rest.find(',');
      const auto label = parse_int(rest.substr(0, comma));
      for (std::size_t k = 0; k < x.size(); ++k) {
        if (comma == std::string_view::npos) throw std::invalid_argument("too few fields");
        rest = rest.substr(comma + 1);
        comma = rest.find(',');
        x[k] = parse_double(rest.substr(0, comma));
      }
      if (comma != std::string_view::npos) throw std::invalid_argument("too many fields");
      if (label < 0) throw std::invalid_argument("negative label");
      data.push_back(x, static_cast<std::size_t>(label));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("longtail-csv line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return data;
}

LabeledDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset '" + path.string() + "'");
  return read_dataset(is);
}

}  // namespace bkd
