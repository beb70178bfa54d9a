#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lasforge/autodiff.hpp"

namespace lasforge {

// Affine map from original feature space into the stored range:
//   stored = lo + (raw - min) / (max - min) * (hi - lo),  stored = lo when min == max.
struct Normalization {
  std::vector<double> min;
  std::vector<double> max;
  double lo = 0.0;
  double hi = 1.0;

  double apply(std::size_t column, double raw) const;
  double invert(std::size_t column, double stored) const;
};

struct Dataset {
  Tensor features;                   // [n, d], values in [0, 1]
  std::vector<std::size_t> labels;   // n entries in [0, classes)
  std::size_t classes = 0;
  Normalization normalization;
  std::vector<std::string> feature_names;
  // Generating class means in stored coordinates (synthetic data only).
  std::vector<std::vector<double>> centers;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  std::vector<std::size_t> class_counts() const;

  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;

  Dataset subset(std::span<const std::size_t> indices) const;
};

struct DataSplit {
  Dataset train;
  Dataset test;
};

Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed);
Dataset make_gaussian_blobs(std::size_t n, std::size_t classes, std::size_t dim, double separation,
                            std::uint64_t seed, double noise = 1.0);

// CSV with a header line. All columns but `label_column` become features,
// min-max normalized per column into [0, 1].
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column);
void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::string& label_column = "label");

// Stratified split; every class keeps at least one sample on each side when
// it has two or more.
DataSplit split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed);

struct Batch {
  Tensor x;
  std::vector<std::size_t> y;
  std::vector<std::size_t> indices;

  std::size_t size() const noexcept { return y.size(); }
};

Batch gather(const Dataset& data, std::span<const std::size_t> indices);

// Shuffled minibatches. The final short batch is kept.
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed);

  // Index batches for a given epoch; a pure function of (seed, epoch).
  std::vector<std::vector<std::size_t>> batches(std::size_t epoch) const;

  // Batches for the current epoch, then advances the epoch counter.
  std::vector<std::vector<std::size_t>> next_epoch();

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batches_per_epoch() const;

 private:
  const Dataset* data_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
};

}  // namespace lasforge
