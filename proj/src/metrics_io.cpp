#include "lasforge/metrics_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "lasforge/errors.hpp"

namespace lasforge {

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_csv(const std::vector<EpochMetrics>& epochs) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& m : epochs) {
    out += std::to_string(m.epoch);
    for (double v : {m.clean_accuracy, m.robust_accuracy, m.mean_l1, m.mean_l2, m.mean_l3, m.mean_l0,
                     m.grad_norm_sq, m.mean_epsilon, m.mean_step, m.mean_iterations}) {
      out += ',';
      out += format_real(v);
    }
    out += ',' + std::to_string(m.samples) + ',' + std::to_string(m.theta_updates) + ',' +
           std::to_string(m.w_updates) + '\n';
  }
  return out;
}

std::string histogram_csv(const std::vector<EpochMetrics>& epochs) {
  std::string out = kHistogramHeader;
  out += '\n';
  for (const auto& m : epochs) {
    for (std::size_t p = 0; p < StrategySpace::kParameters; ++p) {
      for (const auto& oc : m.histograms[p]) {
        out += std::to_string(m.epoch) + ',' + StrategySpace::parameter_names()[p] + ',' +
               std::to_string(oc.value) + ',' + std::to_string(oc.count) + '\n';
      }
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw IoError(source + ":" + std::to_string(line) + ": " + what);
}

double parse_real(const std::string& s, const std::string& source, std::size_t line) {
  if (s.empty()) fail(source, line, "empty field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (*end != '\0' || (errno == ERANGE && std::isinf(v))) fail(source, line, "bad number '" + s + "'");
  return v;
}

std::size_t parse_count(const std::string& s, const std::string& source, std::size_t line) {
  if (s.empty() || s[0] == '-') fail(source, line, "bad count '" + s + "'");
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (*end != '\0' || errno == ERANGE) fail(source, line, "bad count '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<EpochMetrics> parse_metrics_csv(const std::string& text, const std::string& source) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kMetricsHeader) fail(source, 1, "unexpected metrics header");
  std::vector<EpochMetrics> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_fields(lines[i]);
    if (f.size() != 14) fail(source, i + 1, "expected 14 fields, got " + std::to_string(f.size()));
    EpochMetrics m;
    m.epoch = parse_count(f[0], source, i + 1);
    double* reals[] = {&m.clean_accuracy, &m.robust_accuracy, &m.mean_l1, &m.mean_l2, &m.mean_l3,
                       &m.mean_l0, &m.grad_norm_sq, &m.mean_epsilon, &m.mean_step, &m.mean_iterations};
    for (std::size_t r = 0; r < 10; ++r) *reals[r] = parse_real(f[r + 1], source, i + 1);
    m.samples = parse_count(f[11], source, i + 1);
    m.theta_updates = parse_count(f[12], source, i + 1);
    m.w_updates = parse_count(f[13], source, i + 1);
    out.push_back(m);
  }
  return out;
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  return parse_metrics_csv(read_text(path), path.string());
}

void parse_histogram_csv(const std::string& text, std::vector<EpochMetrics>& epochs,
                         const std::string& source) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kHistogramHeader) fail(source, 1, "unexpected histogram header");
  std::map<std::size_t, std::size_t> position;
  for (std::size_t i = 0; i < epochs.size(); ++i) position[epochs[i].epoch] = i;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_fields(lines[i]);
    if (f.size() != 4) fail(source, i + 1, "expected 4 fields, got " + std::to_string(f.size()));
    const std::size_t epoch = parse_count(f[0], source, i + 1);
    std::size_t p = StrategySpace::kParameters;
    for (std::size_t k = 0; k < StrategySpace::kParameters; ++k) {
      if (f[1] == StrategySpace::parameter_names()[k]) p = k;
    }
    if (p == StrategySpace::kParameters) fail(source, i + 1, "unknown parameter '" + f[1] + "'");
    const double option = parse_real(f[2], source, i + 1);
    if (option != std::floor(option)) fail(source, i + 1, "option must be an integer");
    auto it = position.find(epoch);
    if (it == position.end()) {
      EpochMetrics m;
      m.epoch = epoch;
      epochs.push_back(m);
      it = position.emplace(epoch, epochs.size() - 1).first;
    }
    epochs[it->second].histograms[p].push_back({static_cast<int>(option), parse_count(f[3], source, i + 1)});
  }
}

std::vector<EpochMetrics> read_histogram_csv(const std::filesystem::path& path) {
  std::vector<EpochMetrics> out;
  parse_histogram_csv(read_text(path), out, path.string());
  return out;
}

std::string summary_json(const TrainConfig& cfg, const RunMetrics& metrics) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["epochs"] = metrics.epochs.size();
  j["theta_updates"] = metrics.theta_updates;
  j["w_updates"] = metrics.w_updates;
  j["wall_seconds"] = metrics.wall_seconds;
  if (!metrics.epochs.empty()) {
    const auto& last = metrics.epochs.back();
    j["final_clean_accuracy"] = last.clean_accuracy;
    j["final_robust_accuracy"] = last.robust_accuracy;
  }
  auto& per_epoch = j["epoch_wall_seconds"] = nlohmann::ordered_json::array();
  for (const auto& m : metrics.epochs) per_epoch.push_back(m.wall_seconds);
  j["config"] = serialize_config(cfg);
  return j.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_run_artifacts(const std::filesystem::path& dir, const TrainConfig& cfg,
                         const RunMetrics& metrics) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "metrics.csv", metrics_csv(metrics.epochs));
  write_text(dir / "histogram.csv", histogram_csv(metrics.epochs));
  write_text(dir / "summary.json", summary_json(cfg, metrics));
}

}  // namespace lasforge
