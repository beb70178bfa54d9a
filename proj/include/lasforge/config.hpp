#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lasforge/attack.hpp"
#include "lasforge/dataset.hpp"

namespace lasforge {

struct DataConfig {
  std::string kind = "two_moons";  // two_moons | blobs | csv
  std::size_t n = 600;
  double noise = 0.1;
  std::size_t classes = 3;
  std::size_t dim = 2;
  double separation = 4.0;
  std::string csv_path;
  std::string label_col = "label";
  double test_fraction = 0.25;
};

struct FixedStrategy {
  int epsilon = 8;
  int step = 2;
  int iterations = 10;
  bool operator==(const FixedStrategy&) const = default;
};

struct TrainConfig {
  double alpha = 2.0;
  double beta = 4.0;
  std::size_t k = 40;
  double eta1 = 0.1;
  double eta2 = 0.001;
  std::optional<double> lambda;  // lookahead step; defaults to eta1
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool random_start = true;
  StrategySpace space = StrategySpace::defaults();
  EvalAttackSpec eval_attack;

  std::vector<std::size_t> target_hidden{64, 64};
  std::vector<std::size_t> strategy_hidden{64};

  double momentum = 0.0;
  double weight_decay = 0.0;
  double strategy_momentum = 0.0;
  bool per_sample_lookahead = false;
  bool mean_baseline = false;
  bool freeze_strategy = false;
  std::optional<FixedStrategy> fixed_strategy;

  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  DataConfig data;

  double lookahead_step() const { return lambda.value_or(eta1); }
  // Throws ConfigError describing the first invalid field.
  void validate() const;
};

// Assigns one `key = value` setting. Unknown keys and unparsable values throw
// ConfigError.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

// Applies a `key=value` override string as given on the command line.
void apply_override(TrainConfig& cfg, const std::string& assignment);

// Flat `key = value` lines; `#` starts a comment. Errors name the source and line.
TrainConfig parse_config(const std::string& text, const std::string& source = "<config>",
                         TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path);

// Canonical key = value text; parse_config(serialize_config(c)) == c.
std::string serialize_config(const TrainConfig& cfg);

FixedStrategy parse_fixed_strategy(const std::string& text);

// Builds the dataset named by the data section and splits it with the root seed.
DataSplit make_data(const TrainConfig& cfg);

}  // namespace lasforge
