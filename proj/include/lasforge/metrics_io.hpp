#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lasforge/trainer.hpp"

namespace lasforge {

// Metrics CSV: one row per epoch, reals at %.17g, "nan" for missing values.
// Wall-clock time is kept out of this file so that equal seeds give equal bytes.
inline constexpr const char* kMetricsHeader =
    "epoch,clean_acc,robust_acc,mean_l1,mean_l2,mean_l3,mean_l0,grad_norm_sq,"
    "mean_epsilon,mean_step,mean_iterations,samples,theta_updates,w_updates";

// Histogram CSV (long format): epoch,parameter,option,count.
inline constexpr const char* kHistogramHeader = "epoch,parameter,option,count";

std::string format_real(double v);

std::string metrics_csv(const std::vector<EpochMetrics>& epochs);
std::string histogram_csv(const std::vector<EpochMetrics>& epochs);

// Parsers fill the fields present in the respective file only.
std::vector<EpochMetrics> parse_metrics_csv(const std::string& text, const std::string& source = "metrics");
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

// Merges histogram rows into `epochs` (matched by epoch number). Rows for
// unknown epochs append new records.
void parse_histogram_csv(const std::string& text, std::vector<EpochMetrics>& epochs,
                         const std::string& source = "histogram");
std::vector<EpochMetrics> read_histogram_csv(const std::filesystem::path& path);

std::string summary_json(const TrainConfig& cfg, const RunMetrics& metrics);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Writes metrics.csv, histogram.csv and summary.json into dir.
void write_run_artifacts(const std::filesystem::path& dir, const TrainConfig& cfg,
                         const RunMetrics& metrics);

}  // namespace lasforge
