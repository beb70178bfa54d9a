#include "lasforge/diagnostics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "lasforge/errors.hpp"
#include "lasforge/metrics_io.hpp"

namespace lasforge {

void ConvergenceParams::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be finite and >= 0");
  };
  nonneg(L_ww, "L_ww");
  nonneg(L_wtheta, "L_wtheta");
  nonneg(L_thetaw, "L_thetaw");
  nonneg(delta, "delta");
  nonneg(Delta, "Delta");
  if (!(mu > 0.0) || !std::isfinite(mu)) throw std::invalid_argument("mu must be > 0");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("sigma2 must be > 0");
  if (T < 1) throw std::invalid_argument("T must be >= 1");
}

double lipschitz_L0(const ConvergenceParams& p) {
  if (!(p.mu > 0.0)) throw std::invalid_argument("mu must be > 0");
  return p.L_wtheta * p.L_thetaw / p.mu + p.L_ww;
}

double theoretical_lr(const ConvergenceParams& p) {
  p.validate();
  const double L0 = lipschitz_L0(p);
  if (!(L0 > 0.0)) throw std::invalid_argument("L0 must be > 0 for a learning rate");
  const double T = static_cast<double>(p.T);
  return std::min(1.0 / L0, std::sqrt(p.Delta / (p.sigma2 * T * L0)));
}

double convergence_bound(const ConvergenceParams& p) {
  p.validate();
  const double L0 = lipschitz_L0(p);
  const double T = static_cast<double>(p.T);
  return 4.0 * std::sqrt(p.sigma2) * std::sqrt(p.Delta * L0 / T) +
         5.0 * p.delta * p.L_wtheta * p.L_wtheta / p.mu;
}

double approx_grad_gap(double delta, double mu, double L_wtheta) {
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be > 0");
  if (!(delta >= 0.0)) throw std::invalid_argument("delta must be >= 0");
  return L_wtheta * std::sqrt(delta / mu);
}

GradNormTrace estimate_grad_norm_trace(const std::vector<EpochMetrics>& epochs) {
  GradNormTrace t;
  double sum = 0.0;
  for (const auto& m : epochs) {
    if (std::isnan(m.grad_norm_sq)) continue;
    sum += m.grad_norm_sq;
    t.epochs.push_back(m.epoch);
    t.grad_norm_sq.push_back(m.grad_norm_sq);
    t.running_average.push_back(sum / static_cast<double>(t.grad_norm_sq.size()));
  }
  if (t.epochs.empty()) throw std::invalid_argument("metrics contain no gradient-norm records");
  return t;
}

GradNormTrace estimate_grad_norm_trace(const RunMetrics& metrics) {
  return estimate_grad_norm_trace(metrics.epochs);
}

double estimate_lipschitz(const GradientFn& gradient, const ModelParams& center, Rng& rng,
                          std::size_t pairs, double radius) {
  if (pairs == 0) throw std::invalid_argument("estimate_lipschitz: pairs must be > 0");
  auto perturb = [&](const ModelParams& base) {
    std::vector<double> flat = base.flatten();
    for (double& v : flat) v += rng.uniform(-radius, radius);
    return base.unflatten(flat);
  };
  double best = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const ModelParams a = perturb(center);
    const ModelParams b = perturb(center);
    ModelParams diff = a.clone();
    diff.axpy(b, -1.0);
    const double dist = diff.norm();
    if (dist == 0.0) continue;
    ModelParams gdiff = gradient(a);
    gdiff.axpy(gradient(b), -1.0);
    best = std::max(best, gdiff.norm() / dist);
  }
  return best;
}

ConvergenceParams parse_convergence_params(const std::string& text, const std::string& source) {
  ConvergenceParams p;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError(where + "bad number '" + value + "' for " + key);
    }
    if (key == "L_ww") p.L_ww = v;
    else if (key == "L_wtheta") p.L_wtheta = v;
    else if (key == "L_thetaw") p.L_thetaw = v;
    else if (key == "mu") p.mu = v;
    else if (key == "sigma2") p.sigma2 = v;
    else if (key == "delta") p.delta = v;
    else if (key == "Delta") p.Delta = v;
    else if (key == "T") {
      if (v < 1 || v != std::floor(v)) throw ConfigError(where + "T must be a positive integer");
      p.T = static_cast<std::size_t>(v);
    } else {
      throw ConfigError(where + "unknown key '" + key + "'");
    }
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return p;
}

ConvergenceParams load_convergence_params(const std::filesystem::path& path) {
  return parse_convergence_params(read_text(path), path.string());
}

std::string diagnose_csv(const GradNormTrace& trace, const ConvergenceParams& params) {
  std::string out = "epoch,running_avg_grad_norm,bound\n";
  for (std::size_t i = 0; i < trace.epochs.size(); ++i) {
    ConvergenceParams p = params;
    p.T = i + 1;
    out += std::to_string(trace.epochs[i]) + ',' + format_real(trace.running_average[i]) + ',' +
           format_real(convergence_bound(p)) + '\n';
  }
  return out;
}

}  // namespace lasforge
