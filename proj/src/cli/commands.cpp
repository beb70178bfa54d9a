#include "lasforge/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "lasforge/diagnostics.hpp"
#include "lasforge/errors.hpp"
#include "lasforge/metrics_io.hpp"

namespace lasforge::cli {

int report_exception(std::ostream& err) {
  try {
    throw;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    if (!e.checkpoint().empty()) err << "last good parameters: " << e.checkpoint() << "\n";
    return divergence;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return divergence;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return usage_or_config;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return io;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return usage_or_config;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return internal;
  }
}

TrainConfig resolve_config(const RunArgs& args) {
  TrainConfig cfg = args.config ? load_config(*args.config) : TrainConfig{};
  for (const auto& s : args.sets) apply_override(cfg, s);
  if (args.seed) cfg.seed = *args.seed;
  if (args.label_col) cfg.data.label_col = *args.label_col;
  if (args.fixed_strategy) apply_setting(cfg, "fixed_strategy", *args.fixed_strategy);
  cfg.validate();
  return cfg;
}

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string epoch_line(const EpochMetrics& m) {
  std::ostringstream s;
  s << "epoch " << m.epoch << "  clean " << fmt("%.4f", m.clean_accuracy) << "  robust "
    << fmt("%.4f", m.robust_accuracy) << "  L1 " << fmt("%.4f", m.mean_l1) << "  L0 "
    << fmt("%.4f", m.mean_l0) << "  eps " << fmt("%.2f", m.mean_epsilon) << "  "
    << fmt("%.2fs", m.wall_seconds);
  return s.str();
}

std::string dataset_id(const TrainConfig& cfg) {
  if (cfg.data.kind == "csv") return "csv:" + cfg.data.csv_path;
  return cfg.data.kind + ":n=" + std::to_string(cfg.data.n);
}

}  // namespace

TrainResult cmd_train(const TrainArgs& args, std::ostream& log) {
  const TrainConfig cfg = resolve_config(args.run);
  const DataSplit data = make_data(cfg);
  ensure_dir(args.out);
  write_text(args.out / "config.cfg", serialize_config(cfg));

  RunMetrics partial;
  TrainOptions options;
  options.out_dir = args.out;
  options.on_epoch = [&](const EpochMetrics& m) {
    partial.epochs.push_back(m);
    write_text(args.out / "metrics.csv", metrics_csv(partial.epochs));
    write_text(args.out / "histogram.csv", histogram_csv(partial.epochs));
    if (!args.quiet) log << epoch_line(m) << "\n" << std::flush;
  };
  TrainResult result = train(data, cfg, options);
  write_run_artifacts(args.out, cfg, result.metrics);
  if (!args.quiet) {
    log << "wrote " << (args.out / "metrics.csv").string() << ", histogram.csv, summary.json, "
        << "target.params, strategy.params\n";
  }
  return result;
}

EvalReport cmd_eval(const EvalArgs& args) {
  if (args.attacks.empty()) throw std::invalid_argument("attack list must not be empty");
  std::filesystem::path params_path = args.checkpoint;
  std::filesystem::path dir = args.checkpoint;
  if (std::filesystem::is_directory(args.checkpoint)) {
    params_path = args.checkpoint / "target.params";
  } else {
    dir = args.checkpoint.parent_path();
  }
  RunArgs run = args.run;
  if (!run.config && std::filesystem::exists(dir / "config.cfg")) run.config = dir / "config.cfg";
  const TrainConfig cfg = resolve_config(run);
  const DataSplit data = make_data(cfg);
  const ModelParams w = load_params(params_path);
  const MlpSpec spec = infer_spec(w);
  if (spec.input != data.test.dim() || spec.output != data.test.classes) {
    throw ShapeError("checkpoint " + params_path.string() + " expects " + std::to_string(spec.input) +
                     " inputs and " + std::to_string(spec.output) + " classes; dataset has " +
                     std::to_string(data.test.dim()) + " and " + std::to_string(data.test.classes));
  }

  EvalReport report;
  report.dataset = dataset_id(cfg);
  report.checkpoint = params_path.string();
  report.seed = cfg.seed;
  const Tensor& x = data.test.features;
  const auto& y = data.test.labels;
  const AttackOptions opts{cfg.random_start};
  for (const auto& name : args.attacks) {
    double acc = 0.0;
    Rng rng(cfg.seed, Stream::evaluation, 0xe7a1, 0);
    if (name == "clean") {
      acc = accuracy(w, x, y);
    } else if (name == "fgsm") {
      acc = accuracy(w, fgsm_attack(x, y, w, 8).x_adv, y);
    } else if (name.rfind("pgd", 0) == 0 && name.size() > 3 &&
               name.find_first_not_of("0123456789", 3) == std::string::npos) {
      const int iters = std::stoi(name.substr(3));
      if (iters < 1) throw std::invalid_argument("pgd needs at least one iteration");
      acc = robust_accuracy(w, x, y, rng, EvalAttackSpec{8, 2, iters}, opts);
    } else {
      throw std::invalid_argument("unknown attack '" + name + "' (clean, fgsm, pgdN)");
    }
    report.rows.push_back({name, acc});
  }
  if (args.out) write_text(*args.out, eval_csv(report));
  return report;
}

std::string eval_csv(const EvalReport& report) {
  std::string out = "dataset,checkpoint,seed,attack,accuracy\n";
  for (const auto& r : report.rows) {
    out += report.dataset + ',' + report.checkpoint + ',' + std::to_string(report.seed) + ',' + r.attack +
           ',' + format_real(r.accuracy) + '\n';
  }
  return out;
}

std::string eval_table(const EvalReport& report) {
  std::ostringstream s;
  s << "dataset " << report.dataset << "  checkpoint " << report.checkpoint << "  seed " << report.seed
    << "\n";
  s << "attack      accuracy\n";
  for (const auto& r : report.rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-10s  %7.2f%%\n", r.attack.c_str(), 100.0 * r.accuracy);
    s << buf;
  }
  return s.str();
}

ArmResult summarize_arm(const RunMetrics& metrics) {
  ArmResult r;
  const auto& e = metrics.epochs;
  if (e.empty()) return r;
  r.clean = e.back().clean_accuracy;
  r.robust = e.back().robust_accuracy;
  const std::size_t q = std::max<std::size_t>(1, e.size() / 4);
  for (std::size_t i = 0; i < q; ++i) {
    r.robust_final_quarter += e[e.size() - q + i].robust_accuracy / static_cast<double>(q);
    r.mean_epsilon_first_quarter += e[i].mean_epsilon / static_cast<double>(q);
    r.mean_epsilon_final_quarter += e[e.size() - q + i].mean_epsilon / static_cast<double>(q);
  }
  r.wall_seconds = metrics.wall_seconds;
  return r;
}

std::size_t thread_cap() {
  if (const char* env = std::getenv("LASFORGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
    throw ConfigError(std::string("LASFORGE_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

CompareReport cmd_compare(const CompareArgs& args) {
  if (args.seeds.empty()) throw std::invalid_argument("compare needs at least one seed");
  struct Job {
    TrainConfig cfg;
    DataSplit data;
    ArmResult* slot;
  };
  CompareReport report;
  report.rows.resize(args.seeds.size());
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < args.seeds.size(); ++i) {
    report.rows[i].seed = args.seeds[i];
    for (int arm = 0; arm < 2; ++arm) {
      RunArgs run = arm == 0 ? args.a : args.b;
      run.seed = args.seeds[i];
      TrainConfig cfg = resolve_config(run);
      DataSplit data = make_data(cfg);
      jobs.push_back({std::move(cfg), std::move(data), arm == 0 ? &report.rows[i].a : &report.rows[i].b});
    }
  }
  const std::size_t threads = std::min(jobs.size(), args.threads ? args.threads : thread_cap());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        *jobs[j].slot = summarize_arm(train(jobs[j].data, jobs[j].cfg).metrics);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  const double n = static_cast<double>(report.rows.size());
  auto accumulate = [n](ArmResult& mean, const ArmResult& r) {
    mean.clean += r.clean / n;
    mean.robust += r.robust / n;
    mean.robust_final_quarter += r.robust_final_quarter / n;
    mean.mean_epsilon_first_quarter += r.mean_epsilon_first_quarter / n;
    mean.mean_epsilon_final_quarter += r.mean_epsilon_final_quarter / n;
    mean.wall_seconds += r.wall_seconds / n;
  };
  for (const auto& row : report.rows) {
    accumulate(report.mean_a, row.a);
    accumulate(report.mean_b, row.b);
  }
  if (args.out) write_text(*args.out, compare_csv(report));
  return report;
}

std::string compare_csv(const CompareReport& report) {
  std::string out =
      "seed,clean_a,robust_a,robust_q4_a,clean_b,robust_b,robust_q4_b,diff_clean,diff_robust,diff_robust_q4\n";
  auto line = [](const std::string& seed, const ArmResult& a, const ArmResult& b) {
    std::string s = seed;
    for (double v : {a.clean, a.robust, a.robust_final_quarter, b.clean, b.robust, b.robust_final_quarter,
                     a.clean - b.clean, a.robust - b.robust, a.robust_final_quarter - b.robust_final_quarter}) {
      s += ',' + format_real(v);
    }
    return s + '\n';
  };
  for (const auto& r : report.rows) out += line(std::to_string(r.seed), r.a, r.b);
  out += line("mean", report.mean_a, report.mean_b);
  return out;
}

std::string compare_table(const CompareReport& report) {
  std::ostringstream s;
  s << "seed    clean_a robust_a  clean_b robust_b   d_clean  d_robust\n";
  auto line = [&](const std::string& seed, const ArmResult& a, const ArmResult& b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-6s %8.4f %8.4f %8.4f %8.4f %+9.4f %+9.4f\n", seed.c_str(), a.clean,
                  a.robust, b.clean, b.robust, a.clean - b.clean, a.robust - b.robust);
    s << buf;
  };
  for (const auto& r : report.rows) line(std::to_string(r.seed), r.a, r.b);
  line("mean", report.mean_a, report.mean_b);
  return s.str();
}

std::string cmd_diagnose(const DiagnoseArgs& args) {
  const auto path = std::filesystem::is_directory(args.metrics) ? args.metrics / "metrics.csv" : args.metrics;
  const auto epochs = read_metrics_csv(path);
  if (epochs.empty()) throw std::invalid_argument(path.string() + " has no epochs");
  const ConvergenceParams params = load_convergence_params(args.params);
  const std::string csv = diagnose_csv(estimate_grad_norm_trace(epochs), params);
  if (args.out) write_text(*args.out, csv);
  return csv;
}

std::string cmd_histogram(const HistogramArgs& args) {
  const auto hist_path = args.metrics_dir / "histogram.csv";
  if (!std::filesystem::exists(hist_path)) throw IoError("missing " + hist_path.string());
  const auto hist = read_histogram_csv(hist_path);
  const auto metrics_path = args.metrics_dir / "metrics.csv";
  if (std::filesystem::exists(metrics_path)) {
    const auto metrics = read_metrics_csv(metrics_path);
    for (const auto& h : hist) {
      const auto it = std::find_if(metrics.begin(), metrics.end(),
                                   [&](const EpochMetrics& m) { return m.epoch == h.epoch; });
      if (it == metrics.end()) throw IoError("histogram epoch " + std::to_string(h.epoch) + " not in metrics.csv");
      for (std::size_t p = 0; p < StrategySpace::kParameters; ++p) {
        std::size_t total = 0;
        for (const auto& oc : h.histograms[p]) total += oc.count;
        if (total != it->samples) {
          throw IoError("epoch " + std::to_string(h.epoch) + " " + StrategySpace::parameter_names()[p] +
                        " counts sum to " + std::to_string(total) + ", expected " + std::to_string(it->samples));
        }
      }
    }
  }
  const std::string csv = histogram_csv(hist);
  if (args.out) write_text(*args.out, csv);
  return csv;
}

namespace {

void add_run_flags(CLI::App* app, RunArgs& run, bool with_fixed = true) {
  app->add_option("--config", run.config, "configuration file (key = value lines)");
  app->add_option("--set", run.sets, "override one setting, key=value (repeatable)");
  app->add_option("--seed", run.seed, "root seed");
  app->add_option("--label-col", run.label_col, "label column of a CSV dataset");
  if (with_fixed) app->add_option("--fixed-strategy", run.fixed_strategy, "train with one strategy e,s,i");
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"lasforge: adversarial training with a learned attack strategy"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a target model");
  add_run_flags(train_cmd, train_args.run);
  train_cmd->add_option("--out", train_args.out, "output directory");
  train_cmd->add_flag("--quiet", train_args.quiet, "no per-epoch lines");

  EvalArgs eval_args;
  std::string attacks;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint under attacks");
  add_run_flags(eval_cmd, eval_args.run, false);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "run directory or target.params")->required();
  eval_cmd->add_option("--attacks", attacks, "comma list of clean,fgsm,pgdN");
  eval_cmd->add_option("--out", eval_args.out, "CSV output file");

  CompareArgs compare_args;
  std::vector<std::string> sets_a, sets_b, sets_shared;
  std::string seeds;
  auto* compare_cmd = app.add_subcommand("compare", "train two configurations over paired seeds");
  compare_cmd->add_option("--config-a", compare_args.a.config, "configuration of arm A");
  compare_cmd->add_option("--config-b", compare_args.b.config, "configuration of arm B");
  compare_cmd->add_option("--set", sets_shared, "override applied to both arms");
  compare_cmd->add_option("--set-a", sets_a, "override for arm A");
  compare_cmd->add_option("--set-b", sets_b, "override for arm B");
  compare_cmd->add_option("--fixed-strategy-b", compare_args.b.fixed_strategy, "fixed strategy for arm B");
  compare_cmd->add_option("--seeds", seeds, "comma list of seeds (default 0,1,2,3,4)");
  compare_cmd->add_option("--out", compare_args.out, "CSV output file");

  DiagnoseArgs diagnose_args;
  auto* diagnose_cmd = app.add_subcommand("diagnose", "gradient-norm trace against the convergence bound");
  diagnose_cmd->add_option("--metrics", diagnose_args.metrics, "metrics.csv or run directory")->required();
  diagnose_cmd->add_option("--params", diagnose_args.params, "constants file")->required();
  diagnose_cmd->add_option("--out", diagnose_args.out, "CSV output file");

  HistogramArgs histogram_args;
  auto* histogram_cmd = app.add_subcommand("histogram", "strategy histograms as long-format CSV");
  histogram_cmd->add_option("--metrics-dir", histogram_args.metrics_dir, "run directory")->required();
  histogram_cmd->add_option("--out", histogram_args.out, "CSV output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return ok;
    err << "usage error: " << e.what() << "\n";
    return usage_or_config;
  }

  try {
    if (*train_cmd) {
      cmd_train(train_args, out);
    } else if (*eval_cmd) {
      if (!attacks.empty()) {
        eval_args.attacks.clear();
        std::istringstream in(attacks);
        for (std::string a; std::getline(in, a, ',');) if (!a.empty()) eval_args.attacks.push_back(a);
      }
      const EvalReport report = cmd_eval(eval_args);
      out << eval_table(report);
    } else if (*compare_cmd) {
      compare_args.a.sets = sets_shared;
      compare_args.b.sets = sets_shared;
      compare_args.a.sets.insert(compare_args.a.sets.end(), sets_a.begin(), sets_a.end());
      compare_args.b.sets.insert(compare_args.b.sets.end(), sets_b.begin(), sets_b.end());
      if (!seeds.empty()) {
        compare_args.seeds.clear();
        std::istringstream in(seeds);
        for (std::string s; std::getline(in, s, ',');) {
          try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            compare_args.seeds.push_back(v);
          } catch (const std::exception&) {
            throw ConfigError("bad seed '" + s + "'");
          }
        }
      }
      out << compare_table(cmd_compare(compare_args));
    } else if (*diagnose_cmd) {
      const std::string csv = cmd_diagnose(diagnose_args);
      if (!diagnose_args.out) out << csv;
      err << kBoundCaveat << "\n";
    } else if (*histogram_cmd) {
      const std::string csv = cmd_histogram(histogram_args);
      if (!histogram_args.out) out << csv;
    }
  } catch (...) {
    return report_exception(err);
  }
  return ok;
}

}  // namespace lasforge::cli
