#include "divco/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "divco/config.hpp"
#include "divco/error.hpp"
#include "divco/report.hpp"
#include "divco/trainer.hpp"

namespace divco::cli {

namespace fs = std::filesystem;
using losses::LossMode;

namespace {

ExperimentConfig resolve(const Options& opts, std::ostream& out) {
  std::vector<std::string> overrides = opts.sets;
  if (opts.seed) {
    overrides.push_back(fmt::format("train.seed={}", *opts.seed));
    overrides.push_back(fmt::format("seeds=[{}]", *opts.seed));
  }
  if (opts.out) {
    overrides.push_back("output_dir=" + nlohmann::json(*opts.out).dump());
  } else if (const char* env = std::getenv(kOutputEnv); env != nullptr && *env != '\0') {
    overrides.push_back("output_dir=" + nlohmann::json(std::string(env)).dump());
  }
  ExperimentConfig cfg = load_experiment(opts.config, overrides);
  out << "# effective configuration\n" << to_json(cfg).dump(2) << "\n";
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", cfg.output_dir, ec.message()));
  report::write_text((fs::path(cfg.output_dir) / "effective_config.json").string(),
                     to_json(cfg).dump(2) + "\n");
  return cfg;
}

std::string summary(const eval::MetricsReport& m) {
  std::string modes, div;
  for (std::size_t i = 0; i < m.modes_covered.size(); ++i) {
    modes += fmt::format("{}{}", i ? "/" : "", m.modes_covered[i]);
  }
  for (std::size_t i = 0; i < m.diversity.size(); ++i) {
    div += fmt::format("{}{:.4f}", i ? "/" : "", m.diversity[i]);
  }
  return fmt::format("ndb={}/{} jsd={:.6f} modes_covered={} class_fidelity={:.4f} diversity={}",
                     m.ndb, m.bins, m.jsd, modes, m.class_fidelity, div);
}

// Runs `count` independent tasks on up to `jobs` threads. Exceptions are
// rethrown after all threads finish, the lowest task index first.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, count));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Cell {
  std::string run_id;
  ExperimentConfig cfg;
};

std::vector<train::RunResult> run_cells(const std::vector<Cell>& cells, const std::string& root,
                                        std::size_t jobs, std::ostream& out) {
  std::vector<train::RunResult> results(cells.size());
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    results[i] = train::run_to_directory(cells[i].cfg,
                                         (fs::path(root) / ("run_" + cells[i].run_id)).string());
  });
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out << fmt::format("run {}: {}\n", cells[i].run_id,
                       summary(results[i].log.snapshots.back().metrics));
  }
  return results;
}

report::ResultRow row_for(const std::string& id, const ExperimentConfig& cfg,
                          const eval::MetricsReport& m) {
  return {id, cfg.train.mode, cfg.train.seed, cfg.train.lambda_contra, cfg.train.tau,
          cfg.train.radius, m};
}

template <typename Body>
int guarded(std::ostream& err, bool load_errors_are_input, Body body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return load_errors_are_input ? kExitInput : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

std::vector<synth::LabeledSample> take_per_class(const std::vector<synth::LabeledSample>& all,
                                                 std::size_t budget, std::size_t num_classes) {
  const std::size_t per_class = std::max<std::size_t>(1, budget / num_classes);
  std::vector<std::size_t> taken(num_classes, 0);
  std::vector<synth::LabeledSample> out;
  for (const auto& s : all) {
    if (s.label < num_classes && taken[s.label] < per_class) {
      out.push_back(s);
      ++taken[s.label];
    }
  }
  return out;
}

}  // namespace

int cmd_train(const Options& opts, const std::optional<std::string>& resume, std::ostream& out,
              std::ostream& err) {
  return guarded(err, false, [&] {
    const ExperimentConfig cfg = resolve(opts, out);
    const auto run_dir = (fs::path(cfg.output_dir) / "run_0").string();
    const auto result = train::run_to_directory(cfg, run_dir, resume);
    if (result.log.snapshots.empty()) {
      out << fmt::format("final iter={} (nothing left to train)\n", cfg.train.total_iters);
    } else {
      const auto& last = result.log.snapshots.back();
      out << fmt::format("final iter={} {}\n", last.iter, summary(last.metrics));
    }
    out << "wrote " << run_dir << "/log.csv and " << run_dir << "/final.ckpt\n";
    return kExitOk;
  });
}

int cmd_compare(const Options& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, false, [&] {
    const ExperimentConfig base = resolve(opts, out);
    const LossMode modes[] = {LossMode::kAdversarialOnly, LossMode::kLatentRegression,
                              LossMode::kModeSeeking, LossMode::kDivco};
    std::vector<Cell> cells;
    for (LossMode mode : modes) {
      for (std::uint64_t seed : base.seeds) {
        Cell c{fmt::format("{}_s{}", losses::to_string(mode), seed), base};
        c.cfg.train.mode = mode;
        c.cfg.train.seed = seed;
        c.cfg.validate();
        cells.push_back(std::move(c));
      }
    }
    const auto results = run_cells(cells, base.output_dir, opts.jobs, out);

    std::vector<report::ResultRow> rows;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      rows.push_back(row_for(cells[i].run_id, cells[i].cfg, results[i].log.snapshots.back().metrics));
    }
    const auto csv = (fs::path(base.output_dir) / "compare.csv").string();
    report::write_results_csv(csv, rows, base.gmm.num_classes());

    // Ground truth plus the first seed of every mode.
    const std::size_t budget = base.figure.points_per_panel;
    const std::size_t classes = base.gmm.num_classes();
    std::vector<report::ScatterPanel> panels;
    RngStream rng(derive_seed(base.seeds.front(), 3));
    report::ScatterPanel truth{"ground truth", {}};
    for (std::size_t c = 0; c < classes; ++c) {
      for (auto& s : synth::sample(base.gmm, rng, c, std::max<std::size_t>(1, budget / classes))) {
        truth.points.push_back(s);
      }
    }
    panels.push_back(std::move(truth));
    const std::size_t seeds = base.seeds.size();
    for (std::size_t m = 0; m < std::size(modes); ++m) {
      panels.push_back({losses::to_string(modes[m]),
                        take_per_class(results[m * seeds].samples, budget, classes)});
    }
    const auto coloring =
        base.figure.color_by == ColorBy::kMode ? report::Coloring::kMode : report::Coloring::kClass;
    const auto svg = (fs::path(base.output_dir) / "compare.svg").string();
    report::write_text(svg, report::scatter_svg(panels, base.gmm, coloring));
    out << "wrote " << csv << " and " << svg << "\n";
    return kExitOk;
  });
}

int cmd_sweep(const Options& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, false, [&] {
    const ExperimentConfig base = resolve(opts, out);
    struct Axis {
      const char* name;
      const std::vector<double>* values;
      double TrainConfig::*field;
      bool log_x;
    };
    const Axis axes[] = {
        {"lambda_contra", &base.sweep.lambda_contra, &TrainConfig::lambda_contra, true},
        {"tau", &base.sweep.tau, &TrainConfig::tau, true},
        {"radius", &base.sweep.radius, &TrainConfig::radius, true},
    };
    for (const auto& a : axes) {
      if (a.values->empty()) throw ConfigError(fmt::format("sweep.{} is empty", a.name));
    }

    std::vector<Cell> cells;
    std::vector<std::pair<std::size_t, double>> cell_axis;  // (axis, value) per cell
    for (std::size_t a = 0; a < std::size(axes); ++a) {
      for (std::size_t v = 0; v < axes[a].values->size(); ++v) {
        for (std::uint64_t seed : base.seeds) {
          Cell c{fmt::format("{}_{}_s{}", axes[a].name, v, seed), base};
          c.cfg.train.*(axes[a].field) = (*axes[a].values)[v];
          c.cfg.train.seed = seed;
          c.cfg.validate();
          cells.push_back(std::move(c));
          cell_axis.emplace_back(a, (*axes[a].values)[v]);
        }
      }
    }
    const auto results = run_cells(cells, base.output_dir, opts.jobs, out);

    std::vector<report::ResultRow> rows;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      rows.push_back(row_for(cells[i].run_id, cells[i].cfg, results[i].log.snapshots.back().metrics));
    }
    const auto csv = (fs::path(base.output_dir) / "sweep.csv").string();
    report::write_results_csv(csv, rows, base.gmm.num_classes());

    for (std::size_t a = 0; a < std::size(axes); ++a) {
      const auto& values = *axes[a].values;
      report::Series mean{"mean", values, std::vector<double>(values.size(), 0.0)};
      std::vector<report::Series> per_seed;
      for (std::uint64_t seed : base.seeds) {
        per_seed.push_back({fmt::format("seed {}", seed), values, {}});
      }
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cell_axis[i].first != a) continue;
        const double jsd = results[i].log.snapshots.back().metrics.jsd;
        const std::size_t v = static_cast<std::size_t>(
            std::find(values.begin(), values.end(), cell_axis[i].second) - values.begin());
        const std::size_t s = static_cast<std::size_t>(
            std::find(base.seeds.begin(), base.seeds.end(), cells[i].cfg.train.seed) -
            base.seeds.begin());
        per_seed[s].y.push_back(jsd);
        mean.y[v] += jsd / static_cast<double>(base.seeds.size());
      }
      std::vector<report::Series> series{mean};
      series.insert(series.end(), per_seed.begin(), per_seed.end());
      const auto svg =
          (fs::path(base.output_dir) / fmt::format("sweep_{}.svg", axes[a].name)).string();
      report::write_text(svg, report::line_chart_svg(fmt::format("JSD vs {}", axes[a].name),
                                                     axes[a].name, "JSD (nats)", series,
                                                     axes[a].log_x));
      out << "wrote " << svg << "\n";
    }
    out << "wrote " << csv << "\n";
    return kExitOk;
  });
}

int cmd_eval(const Options& opts, const std::string& checkpoint, std::ostream& out,
             std::ostream& err) {
  ExperimentConfig cfg;
  std::optional<models::Generator> g;
  const int loaded = guarded(err, true, [&] {
    cfg = resolve(opts, out);
    g.emplace(train::load_generator(cfg, models::read_checkpoint(checkpoint)));
    return kExitOk;
  });
  if (loaded != kExitOk) return loaded;
  return guarded(err, false, [&] {
    const auto seed = train::default_eval_seed(cfg);
    const auto set = train::make_eval_set(cfg, seed);
    const auto metrics = train::evaluate_generator(*g, cfg, set);
    const auto csv = (fs::path(cfg.output_dir) / "eval.csv").string();
    report::write_results_csv(csv, {row_for("eval", cfg, metrics)}, cfg.gmm.num_classes());
    out << fmt::format("eval seed={} {}\n", seed, summary(metrics));
    out << "wrote " << csv << "\n";
    return kExitOk;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-augmented contrastive cGAN experiments on 2D Gaussian mixtures", kToolName};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  Options opts;
  std::optional<std::string> resume;
  std::string checkpoint;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "experiment file")->required();
    sub->add_option("--out", opts.out, "output directory (default: $DIVCO_OUT or output_dir)");
    sub->add_option("--seed", opts.seed, "training seed; replaces the seed list");
    sub->add_option("--jobs", opts.jobs, "parallel training runs")->check(CLI::PositiveNumber);
    sub->add_option("--set", opts.sets, "override, key=value (repeatable)");
  };
  auto* train = app.add_subcommand("train", "train one run");
  common(train);
  train->add_option("--resume", resume, "checkpoint to continue from");
  auto* compare = app.add_subcommand("compare", "train every loss mode and plot them side by side");
  common(compare);
  auto* sweep = app.add_subcommand("sweep", "one-at-a-time sensitivity sweep");
  common(sweep);
  auto* evaluate = app.add_subcommand("eval", "recompute metrics for a checkpoint");
  common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  if (train->parsed()) return cmd_train(opts, resume, out, err);
  if (compare->parsed()) return cmd_compare(opts, out, err);
  if (sweep->parsed()) return cmd_sweep(opts, out, err);
  return cmd_eval(opts, checkpoint, out, err);
}

}  // namespace divco::cli
