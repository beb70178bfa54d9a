#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lasforge/config.hpp"
#include "lasforge/trainer.hpp"

namespace lasforge::cli {

enum ExitCode : int { ok = 0, usage_or_config = 2, io = 3, divergence = 4, internal = 1 };

// Maps the exception currently being handled to an exit code and prints it.
int report_exception(std::ostream& err);

// Settings common to the commands that build a run configuration.
struct RunArgs {
  std::optional<std::filesystem::path> config;
  std::vector<std::string> sets;  // key=value, applied in order after the file
  std::optional<std::uint64_t> seed;
  std::optional<std::string> label_col;
  std::optional<std::string> fixed_strategy;  // "e,s,i"
};

TrainConfig resolve_config(const RunArgs& args);

struct TrainArgs {
  RunArgs run;
  std::filesystem::path out = "lasforge-run";
  bool quiet = false;
};

// Writes metrics.csv, histogram.csv, summary.json, config.cfg and
// target.params / strategy.params into args.out.
TrainResult cmd_train(const TrainArgs& args, std::ostream& log);

inline const std::vector<std::string> kDefaultAttacks{"clean", "fgsm", "pgd10", "pgd20", "pgd50"};

struct EvalArgs {
  RunArgs run;  // dataset settings; config.cfg in the checkpoint dir is used when no --config
  std::filesystem::path checkpoint;  // directory holding target.params, or the file itself
  std::vector<std::string> attacks = kDefaultAttacks;
  std::optional<std::filesystem::path> out;  // CSV destination
};

struct EvalRow {
  std::string attack;
  double accuracy = 0.0;
};

struct EvalReport {
  std::string dataset;
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::vector<EvalRow> rows;
};

EvalReport cmd_eval(const EvalArgs& args);
std::string eval_csv(const EvalReport& report);
std::string eval_table(const EvalReport& report);

struct CompareArgs {
  RunArgs a;
  RunArgs b;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::optional<std::filesystem::path> out;
  std::size_t threads = 0;  // 0: LASFORGE_THREADS or 1
};

struct ArmResult {
  double clean = 0.0;                 // final epoch
  double robust = 0.0;                // final epoch
  double robust_final_quarter = 0.0;  // mean over the last quarter of epochs
  double mean_epsilon_first_quarter = 0.0;
  double mean_epsilon_final_quarter = 0.0;
  double wall_seconds = 0.0;
};

struct CompareRow {
  std::uint64_t seed = 0;
  ArmResult a;
  ArmResult b;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  ArmResult mean_a;
  ArmResult mean_b;
};

ArmResult summarize_arm(const RunMetrics& metrics);
CompareReport cmd_compare(const CompareArgs& args);
std::string compare_csv(const CompareReport& report);
std::string compare_table(const CompareReport& report);

std::size_t thread_cap();

struct DiagnoseArgs {
  std::filesystem::path metrics;  // metrics.csv or a run directory
  std::filesystem::path params;
  std::optional<std::filesystem::path> out;
};

std::string cmd_diagnose(const DiagnoseArgs& args);

struct HistogramArgs {
  std::filesystem::path metrics_dir;
  std::optional<std::filesystem::path> out;
};

// Validates that per-epoch counts sum to the drawn-sample count recorded in
// metrics.csv (when present) and returns the long-format CSV.
std::string cmd_histogram(const HistogramArgs& args);

// Full command line entry point.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace lasforge::cli
