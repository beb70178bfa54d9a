#include "lasforge/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lasforge/errors.hpp"
#include "lasforge/rng.hpp"

namespace lasforge {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  const long long out = parse_int(key, v);
  if (out < 0) bad_value(key, v, "a non-negative integer");
  return static_cast<std::size_t>(out);
}

std::uint64_t parse_seed(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an unsigned 64-bit integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

// "3:15" (inclusive range) or "3,5,8".
std::vector<int> parse_options(const std::string& key, const std::string& v) {
  std::vector<int> out;
  const auto colon = v.find(':');
  if (colon != std::string::npos) {
    const long long lo = parse_int(key, trim(v.substr(0, colon)));
    const long long hi = parse_int(key, trim(v.substr(colon + 1)));
    if (hi < lo) bad_value(key, v, "lo:hi with lo <= hi");
    for (long long x = lo; x <= hi; ++x) out.push_back(static_cast<int>(x));
    return out;
  }
  for (const auto& item : split(v, ',')) out.push_back(static_cast<int>(parse_int(key, item)));
  if (out.empty()) bad_value(key, v, "an option list");
  return out;
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty() || v == "none") return out;
  for (const auto& item : split(v, ',')) out.push_back(parse_count(key, item));
  return out;
}

std::string join(const auto& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

FixedStrategy parse_fixed_strategy(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) bad_value("fixed_strategy", text, "epsilon,step,iterations");
  FixedStrategy f;
  f.epsilon = static_cast<int>(parse_int("fixed_strategy", parts[0]));
  f.step = static_cast<int>(parse_int("fixed_strategy", parts[1]));
  f.iterations = static_cast<int>(parse_int("fixed_strategy", parts[2]));
  return f;
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "alpha") cfg.alpha = parse_double(key, v);
  else if (key == "beta") cfg.beta = parse_double(key, v);
  else if (key == "k") cfg.k = parse_count(key, v);
  else if (key == "eta1") cfg.eta1 = parse_double(key, v);
  else if (key == "eta2") cfg.eta2 = parse_double(key, v);
  else if (key == "lambda") {
    if (v == "auto" || v.empty()) cfg.lambda.reset();
    else cfg.lambda = parse_double(key, v);
  }
  else if (key == "T" || key == "epochs") cfg.epochs = parse_count(key, v);
  else if (key == "batch_size" || key == "N") cfg.batch_size = parse_count(key, v);
  else if (key == "seed") cfg.seed = parse_seed(key, v);
  else if (key == "random_start") cfg.random_start = parse_bool(key, v);
  else if (key == "eps_options") cfg.space.epsilon = parse_options(key, v);
  else if (key == "step_options") cfg.space.step = parse_options(key, v);
  else if (key == "iter_options") cfg.space.iterations = parse_options(key, v);
  else if (key == "eval_eps") cfg.eval_attack.epsilon = static_cast<int>(parse_int(key, v));
  else if (key == "eval_step") cfg.eval_attack.step = static_cast<int>(parse_int(key, v));
  else if (key == "eval_iters") cfg.eval_attack.iterations = static_cast<int>(parse_int(key, v));
  else if (key == "target_hidden") cfg.target_hidden = parse_widths(key, v);
  else if (key == "strategy_hidden") cfg.strategy_hidden = parse_widths(key, v);
  else if (key == "momentum") cfg.momentum = parse_double(key, v);
  else if (key == "weight_decay") cfg.weight_decay = parse_double(key, v);
  else if (key == "strategy_momentum") cfg.strategy_momentum = parse_double(key, v);
  else if (key == "per_sample_lookahead") cfg.per_sample_lookahead = parse_bool(key, v);
  else if (key == "mean_baseline") cfg.mean_baseline = parse_bool(key, v);
  else if (key == "freeze_strategy") cfg.freeze_strategy = parse_bool(key, v);
  else if (key == "fixed_strategy") {
    if (v == "none" || v.empty()) cfg.fixed_strategy.reset();
    else cfg.fixed_strategy = parse_fixed_strategy(v);
  }
  else if (key == "checkpoint_every") cfg.checkpoint_every = parse_count(key, v);
  else if (key == "dataset") cfg.data.kind = v;
  else if (key == "n") cfg.data.n = parse_count(key, v);
  else if (key == "noise") cfg.data.noise = parse_double(key, v);
  else if (key == "classes") cfg.data.classes = parse_count(key, v);
  else if (key == "dim") cfg.data.dim = parse_count(key, v);
  else if (key == "separation") cfg.data.separation = parse_double(key, v);
  else if (key == "csv_path") cfg.data.csv_path = v;
  else if (key == "label_col") cfg.data.label_col = v;
  else if (key == "test_fraction") cfg.data.test_fraction = parse_double(key, v);
  else throw ConfigError("unknown key '" + key + "'");
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

TrainConfig parse_config(const std::string& text, const std::string& source, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    try {
      if (eq == std::string::npos) throw ConfigError("expected key = value, got '" + line + "'");
      apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string serialize_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "alpha = " << fmt(c.alpha) << '\n'
     << "beta = " << fmt(c.beta) << '\n'
     << "k = " << c.k << '\n'
     << "eta1 = " << fmt(c.eta1) << '\n'
     << "eta2 = " << fmt(c.eta2) << '\n'
     << "lambda = " << (c.lambda ? fmt(*c.lambda) : std::string("auto")) << '\n'
     << "epochs = " << c.epochs << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "seed = " << c.seed << '\n'
     << "random_start = " << (c.random_start ? "true" : "false") << '\n'
     << "eps_options = " << join(c.space.epsilon) << '\n'
     << "step_options = " << join(c.space.step) << '\n'
     << "iter_options = " << join(c.space.iterations) << '\n'
     << "eval_eps = " << c.eval_attack.epsilon << '\n'
     << "eval_step = " << c.eval_attack.step << '\n'
     << "eval_iters = " << c.eval_attack.iterations << '\n'
     << "target_hidden = " << (c.target_hidden.empty() ? "none" : join(c.target_hidden)) << '\n'
     << "strategy_hidden = " << (c.strategy_hidden.empty() ? "none" : join(c.strategy_hidden)) << '\n'
     << "momentum = " << fmt(c.momentum) << '\n'
     << "weight_decay = " << fmt(c.weight_decay) << '\n'
     << "strategy_momentum = " << fmt(c.strategy_momentum) << '\n'
     << "per_sample_lookahead = " << (c.per_sample_lookahead ? "true" : "false") << '\n'
     << "mean_baseline = " << (c.mean_baseline ? "true" : "false") << '\n'
     << "freeze_strategy = " << (c.freeze_strategy ? "true" : "false") << '\n';
  os << "fixed_strategy = ";
  if (c.fixed_strategy) {
    os << c.fixed_strategy->epsilon << ',' << c.fixed_strategy->step << ','
       << c.fixed_strategy->iterations;
  } else {
    os << "none";
  }
  os << '\n'
     << "checkpoint_every = " << c.checkpoint_every << '\n'
     << "dataset = " << c.data.kind << '\n'
     << "n = " << c.data.n << '\n'
     << "noise = " << fmt(c.data.noise) << '\n'
     << "classes = " << c.data.classes << '\n'
     << "dim = " << c.data.dim << '\n'
     << "separation = " << fmt(c.data.separation) << '\n'
     << "csv_path = " << c.data.csv_path << '\n'
     << "label_col = " << c.data.label_col << '\n'
     << "test_fraction = " << fmt(c.data.test_fraction) << '\n';
  return os.str();
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(alpha >= 0.0 && beta >= 0.0, "alpha and beta must be non-negative");
  require(k >= 1, "k must be at least 1");
  require(eta1 > 0.0 && eta2 > 0.0, "learning rates must be positive");
  require(!lambda || *lambda >= 0.0, "lambda must be non-negative");
  require(epochs >= 1, "epochs (T) must be at least 1");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(strategy_momentum >= 0.0 && strategy_momentum < 1.0, "strategy_momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  try {
    space.validate();
    StrategySpace::singleton(eval_attack.epsilon, eval_attack.step, eval_attack.iterations).validate();
    if (fixed_strategy) {
      StrategySpace::singleton(fixed_strategy->epsilon, fixed_strategy->step,
                               fixed_strategy->iterations)
          .validate();
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (std::size_t w : target_hidden) require(w > 0, "target_hidden widths must be positive");
  for (std::size_t w : strategy_hidden) require(w > 0, "strategy_hidden widths must be positive");
  require(data.kind == "two_moons" || data.kind == "blobs" || data.kind == "csv",
          "dataset must be two_moons, blobs or csv");
  require(data.kind != "csv" || !data.csv_path.empty(), "dataset = csv needs csv_path");
  require(data.test_fraction > 0.0 && data.test_fraction < 1.0, "test_fraction must lie in (0, 1)");
}

DataSplit make_data(const TrainConfig& cfg) {
  const std::uint64_t data_seed = derive_seed(cfg.seed, Stream::data);
  Dataset full;
  try {
    if (cfg.data.kind == "two_moons") {
      full = make_two_moons(cfg.data.n, cfg.data.noise, data_seed);
    } else if (cfg.data.kind == "blobs") {
      full = make_gaussian_blobs(cfg.data.n, cfg.data.classes, cfg.data.dim, cfg.data.separation,
                                 data_seed);
    } else if (cfg.data.kind == "csv") {
      full = load_csv(cfg.data.csv_path, cfg.data.label_col);
    } else {
      throw ConfigError("unknown dataset '" + cfg.data.kind + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return split_dataset(full, cfg.data.test_fraction, cfg.seed);
}

}  // namespace lasforge
