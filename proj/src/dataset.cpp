#include "lasforge/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "lasforge/errors.hpp"
#include "lasforge/rng.hpp"

namespace lasforge {

double Normalization::apply(std::size_t column, double raw) const {
  const double span = max[column] - min[column];
  if (span == 0.0) return lo;
  return lo + (raw - min[column]) / span * (hi - lo);
}

double Normalization::invert(std::size_t column, double stored) const {
  const double span = max[column] - min[column];
  if (span == 0.0) return min[column];
  return min[column] + (stored - lo) / (hi - lo) * span;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t y : labels) {
    if (y < classes) ++counts[y];
  }
  return counts;
}

void Dataset::validate() const {
  if (labels.empty()) throw std::invalid_argument("dataset is empty");
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw std::invalid_argument("dataset features " + shape_string(features.shape) +
                                " do not match " + std::to_string(labels.size()) + " labels");
  }
  for (double v : features.data) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("dataset feature outside [0, 1]");
  }
  for (std::size_t y : labels) {
    if (y >= classes) throw std::invalid_argument("dataset label out of range");
  }
  const auto counts = class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw std::invalid_argument("dataset class " + std::to_string(c) + " has no samples");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  const std::size_t d = dim();
  out.features = Tensor::zeros({std::max<std::size_t>(indices.size(), 1), d});
  if (indices.empty()) out.features.data.clear();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(features.data.begin() + static_cast<std::ptrdiff_t>(indices[i] * d), d,
                out.features.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    out.labels.push_back(labels[indices[i]]);
  }
  out.classes = classes;
  out.normalization = normalization;
  out.feature_names = feature_names;
  out.centers = centers;
  return out;
}

namespace {

std::vector<std::string> default_names(std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

// Per-column min-max into [lo, hi]; with `shared`, one range for all columns.
Normalization fit_normalization(const std::vector<double>& raw, std::size_t n, std::size_t d,
                                double lo, double hi, bool shared) {
  Normalization norm;
  norm.lo = lo;
  norm.hi = hi;
  norm.min.assign(d, 0.0);
  norm.max.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double mn = raw[j], mx = raw[j];
    for (std::size_t i = 0; i < n; ++i) {
      mn = std::min(mn, raw[i * d + j]);
      mx = std::max(mx, raw[i * d + j]);
    }
    norm.min[j] = mn;
    norm.max[j] = mx;
  }
  if (shared) {
    const double mn = *std::min_element(norm.min.begin(), norm.min.end());
    const double mx = *std::max_element(norm.max.begin(), norm.max.end());
    std::fill(norm.min.begin(), norm.min.end(), mn);
    std::fill(norm.max.begin(), norm.max.end(), mx);
  }
  return norm;
}

Tensor normalize(const std::vector<double>& raw, std::size_t n, std::size_t d,
                 const Normalization& norm) {
  Tensor out = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = norm.apply(j, raw[i * d + j]);
      out.data[i * d + j] = std::min(std::max(v, norm.lo), norm.hi);
    }
  }
  return out;
}

}  // namespace

Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("make_two_moons: n must be at least 2");
  if (!(noise >= 0.0)) throw std::invalid_argument("make_two_moons: noise must be non-negative");
  Rng rng(seed, Stream::data);
  const std::size_t n_upper = (n + 1) / 2;
  const std::size_t n_lower = n / 2;
  std::vector<double> raw;
  raw.reserve(2 * n);
  Dataset out;
  auto arc_param = [](std::size_t i, std::size_t count) {
    return count > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1)
                     : 0.0;
  };
  for (std::size_t i = 0; i < n_upper; ++i) {
    const double t = arc_param(i, n_upper);
    raw.push_back(std::cos(t));
    raw.push_back(std::sin(t));
    out.labels.push_back(0);
  }
  for (std::size_t i = 0; i < n_lower; ++i) {
    const double t = arc_param(i, n_lower);
    raw.push_back(1.0 - std::cos(t));
    raw.push_back(0.5 - std::sin(t));
    out.labels.push_back(1);
  }
  if (noise > 0.0) {
    for (double& v : raw) v += noise * rng.normal();
  }
  out.classes = 2;
  out.normalization = fit_normalization(raw, n, 2, 0.1, 0.9, false);
  out.features = normalize(raw, n, 2, out.normalization);
  out.feature_names = default_names(2);
  return out;
}

Dataset make_gaussian_blobs(std::size_t n, std::size_t classes, std::size_t dim, double separation,
                            std::uint64_t seed, double noise) {
  if (classes < 2) throw std::invalid_argument("make_gaussian_blobs: need at least 2 classes");
  if (dim < 2) throw std::invalid_argument("make_gaussian_blobs: need at least 2 dimensions");
  if (n < classes) throw std::invalid_argument("make_gaussian_blobs: n must be at least classes");
  if (!(separation > 0.0) || !(noise >= 0.0)) {
    throw std::invalid_argument("make_gaussian_blobs: separation must be positive, noise >= 0");
  }
  Rng rng(seed, Stream::data);
  // Centers on a circle in the first two axes, adjacent centers `separation` apart.
  const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(classes)));
  std::vector<std::vector<double>> raw_centers(classes, std::vector<double>(dim, 0.0));
  for (std::size_t c = 0; c < classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
    raw_centers[c][0] = radius * std::cos(angle);
    raw_centers[c][1] = radius * std::sin(angle);
  }
  std::vector<double> raw(n * dim);
  Dataset out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    for (std::size_t j = 0; j < dim; ++j) raw[i * dim + j] = raw_centers[c][j] + noise * rng.normal();
    out.labels.push_back(c);
  }
  out.classes = classes;
  out.normalization = fit_normalization(raw, n, dim, 0.0, 1.0, true);
  out.features = normalize(raw, n, dim, out.normalization);
  out.feature_names = default_names(dim);
  for (const auto& center : raw_centers) {
    std::vector<double> stored(dim);
    for (std::size_t j = 0; j < dim; ++j) stored[j] = out.normalization.apply(j, center[j]);
    out.centers.push_back(std::move(stored));
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string position(const std::filesystem::path& path, std::size_t line, std::size_t column) {
  return path.string() + ": row " + std::to_string(line) + ", column " + std::to_string(column);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) throw IoError(path.string() + ": empty file");
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw IoError(path.string() + ": no column named '" + label_column + "'");
  }
  const std::size_t label_idx = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t d = header.size() - 1;
  if (d == 0) throw IoError(path.string() + ": no feature columns");

  std::vector<double> raw;
  Dataset out;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw IoError(position(path, line_no, fields.size()) + ": expected " +
                    std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string& f = fields[c];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty() || !std::isfinite(v)) {
        throw IoError(position(path, line_no, c + 1) + ": cannot parse '" + f + "' as a number");
      }
      if (c == label_idx) {
        if (v < 0.0 || std::floor(v) != v) {
          throw IoError(position(path, line_no, c + 1) + ": label '" + f +
                        "' is not a non-negative integer");
        }
        out.labels.push_back(static_cast<std::size_t>(v));
      } else {
        raw.push_back(v);
      }
    }
  }
  if (out.labels.empty()) throw IoError(path.string() + ": no data rows");
  const std::size_t n = out.labels.size();
  out.classes = *std::max_element(out.labels.begin(), out.labels.end()) + 1;
  out.normalization = fit_normalization(raw, n, d, 0.0, 1.0, false);
  out.features = normalize(raw, n, d, out.normalization);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_idx) out.feature_names.push_back(header[c]);
  }
  const auto counts = out.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw IoError(path.string() + ": class " + std::to_string(c) + " has no samples");
    }
  }
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t d = data.dim();
  const auto names = data.feature_names.size() == d ? data.feature_names : default_names(d);
  for (const auto& name : names) out << name << ',';
  out << label_column << '\n';
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(i, j));
      out << buf << ',';
    }
    out << data.labels[i] << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

DataSplit split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test fraction must lie in (0, 1)");
  }
  Rng rng(seed, Stream::split);
  std::vector<std::vector<std::size_t>> by_class(data.classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& members : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
    std::size_t n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(members.size())));
    if (members.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
    test_idx.insert(test_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {data.subset(train_idx), data.subset(test_idx)};
}

Batch gather(const Dataset& data, std::span<const std::size_t> indices) {
  Batch batch;
  const std::size_t d = data.dim();
  batch.x = Tensor::zeros({indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = data.features.row(indices[i]);
    std::copy(src.begin(), src.end(), batch.x.row(i).begin());
    batch.y.push_back(data.labels[indices[i]]);
  }
  batch.indices.assign(indices.begin(), indices.end());
  return batch;
}

BatchIterator::BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (data_->size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::vector<std::size_t>> BatchIterator::batches(std::size_t epoch) const {
  std::vector<std::size_t> order(data_->size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed_, Stream::shuffle, epoch);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const std::size_t end = std::min(order.size(), start + batch_size_);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::vector<std::size_t>> BatchIterator::next_epoch() { return batches(epoch_++); }

}  // namespace lasforge
