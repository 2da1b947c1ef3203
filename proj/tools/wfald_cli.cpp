#include "wfald/config.hpp"
#include "wfald/errors.hpp"
#include "wfald/harness.hpp"
#include "wfald/protocol.hpp"

#include <CLI11.hpp>
#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace wfald;

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string output;
  std::size_t workers = 0;
  bool quiet = false;
};

SweepSpec load_spec(const CommonOptions& opt) {
  SweepSpec spec = opt.config.empty() ? parse_config_text("", opt.overrides) : parse_config(opt.config, opt.overrides);
  if (!opt.output.empty()) spec.output_dir = opt.output;
  if (opt.workers > 0) spec.base.workers = opt.workers;
  return spec;
}

ProgressFn progress_printer(bool quiet) {
  if (quiet) return {};
  return [](std::size_t done, std::size_t total) {
    if (done == total || done % 50 == 0) {
      std::fprintf(stderr, "\r%zu/%zu replicates", done, total);
      if (done == total) std::fputc('\n', stderr);
    }
  };
}

void print_rows(const SweepResult& result) {
  std::printf("%-8s %6s %7s %12s %12s %12s %12s\n", "alg", "p_c", "snr_db", "mse", "mse_se", "test_ens", "test_last");
  for (const auto& r : result.rows) {
    std::printf("%-8s %6g %7g %12.6g %12.3g %12.6g %12.6g\n", std::string(to_string(r.algorithm)).c_str(), r.p_c,
                r.snr_db, r.mse.mean, r.mse.se, r.test_error_ensemble.mean, r.test_error_frequentist.mean);
  }
}

int cmd_run(const CommonOptions& opt) {
  SweepSpec spec = load_spec(opt);
  spec.algorithms = {spec.base.algorithm};
  spec.pc_grid = {spec.base.p_c};
  spec.snr_db_grid = {spec.base.snr_db};
  const SweepResult result = run_sweep(spec, progress_printer(opt.quiet));
  write_sweep(result, spec.output_dir);
  if (spec.base.algorithm == Algorithm::wfald || spec.base.algorithm == Algorithm::wfedavg) {
    RunConfig first = spec.base;
    first.record_channel_log = true;
    write_channel_log(run_replicate(first, make_problem(first), 0), spec.output_dir / "channel_log.csv");
  }
  print_rows(result);
  return 0;
}

int cmd_sweep(const CommonOptions& opt) {
  const SweepSpec spec = load_spec(opt);
  if (!opt.quiet) {
    std::fprintf(stderr, "%zu grid points x %zu replicates -> %s\n", spec.grid_size(), spec.replicates,
                 spec.output_dir.string().c_str());
  }
  const SweepResult result = run_sweep(spec, progress_printer(opt.quiet));
  write_sweep(result, spec.output_dir);
  if (!opt.quiet) print_rows(result);
  return 0;
}

int cmd_plotdata(const std::string& input, const std::string& figure, const std::string& output) {
  const SweepResult result = load_sweep(input);
  const std::filesystem::path dir = output.empty() ? std::filesystem::path(input) : std::filesystem::path(output);
  std::vector<Figure> figures;
  if (figure == "all") {
    figures = {Figure::pc_curve, Figure::snr_curve, Figure::baseline_compare};
  } else {
    figures = {parse_figure(figure)};
  }
  for (Figure f : figures) {
    if (figure == "all") {
      try {
        std::printf("%s\n", emit_plotdata(result, f, dir).string().c_str());
      } catch (const ConfigError& e) {
        std::fprintf(stderr, "skipping %s: %s\n", std::string(to_string(f)).c_str(), e.what());
      }
    } else {
      std::printf("%s\n", emit_plotdata(result, f, dir).string().c_str());
    }
  }
  return 0;
}

// Quick invariant battery on a small problem.
int cmd_validate() {
  RunConfig base;
  base.K = 4;
  base.d = 3;
  base.N = 80;
  base.S = 40;
  base.S_b = 20;
  base.replicates = 4;
  base.test_per_device = 50;
  base.theta_star = Vector::Ones(3);
  const Problem problem = make_problem(base);

  int failures = 0;
  const auto check = [&](const char* name, const std::function<bool()>& fn) {
    bool ok = false;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "%s: %s\n", name, e.what());
    }
    std::printf("%s %s\n", ok ? "PASS" : "FAIL", name);
    if (!ok) ++failures;
  };

  check("posterior covariance is symmetric positive definite", [&] {
    const Matrix& c = problem.posterior.covariance;
    Eigen::LLT<Matrix> llt(c);
    return (c - c.transpose()).norm() == 0.0 && llt.info() == Eigen::Success;
  });
  check("W2 of a distribution with itself is zero",
        [&] { return std::abs(w2_squared(problem.posterior, problem.posterior)) < 1e-12; });
  check("replicates are deterministic", [&] {
    const ReplicateResult a = run_replicate(base, problem, 1);
    const ReplicateResult b = run_replicate(base, problem, 1);
    return a.sq_error == b.sq_error && a.flags == b.flags;
  });
  check("WFALD, FALD and WFedAvg share round flags and mini-batches", [&] {
    RunConfig f = base;
    f.algorithm = Algorithm::fald;
    RunConfig g = base;
    g.algorithm = Algorithm::wfedavg;
    g.final_aggregation = FinalAggregation::off;
    const ReplicateResult a = run_replicate(base, problem, 0);
    const ReplicateResult b = run_replicate(f, problem, 0);
    const ReplicateResult c = run_replicate(g, problem, 0);
    return a.flags == b.flags && a.flags == c.flags && a.batch_digest == b.batch_digest &&
           a.batch_digest == c.batch_digest;
  });
  check("power constraint holds on every wireless round", [&] {
    for (double snr : {0.0, 10.0, 40.0}) {
      RunConfig c = base;
      c.snr_db = snr;
      const ReplicateResult r = run_replicate(c, problem, 2);
      if (r.power_checks != r.wireless_rounds * c.K) return false;
    }
    return true;
  });
  check("residual noise is non-negative", [&] {
    RunConfig c = base;
    c.snr_db = 5.0;
    const ReplicateResult r = run_replicate(c, problem, 3);
    for (double b : r.beta) {
      if (!(b >= 0.0)) return false;
    }
    return true;
  });
  check("p_c = 1 leaves no parameter drift after aggregation", [&] {
    RunConfig c = base;
    c.p_c = 1.0;
    c.algorithm = Algorithm::fald;
    const ReplicateResult r = run_replicate(c, problem, 0);
    for (std::size_t s = 1; s < r.v_theta.size(); ++s) {
      if (r.v_theta[s] != 0.0) return false;
    }
    return true;
  });
  check("sweep output has one row per grid point", [&] {
    SweepSpec spec;
    spec.base = base;
    spec.base.replicates = 2;
    spec.replicates = 2;
    spec.pc_grid = {0.5, 1.0};
    spec.snr_db_grid = {20.0};
    spec.algorithms = {Algorithm::wfald, Algorithm::fald};
    return run_sweep(spec).rows.size() == 4;
  });
  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wireless federated Langevin sampling experiments"};
  app.set_version_flag("--version", std::string(WFALD_VERSION));
  app.require_subcommand(1);

  CommonOptions run_opt, sweep_opt;
  const auto add_common = [](CLI::App* sub, CommonOptions& opt) {
    sub->add_option("-c,--config", opt.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", opt.overrides, "override, e.g. --set run.eta=1e-3 (repeatable)");
    sub->add_option("-o,--output", opt.output, "output directory (overrides sweep.output_dir)");
    sub->add_option("-j,--workers", opt.workers, "worker threads");
    sub->add_flag("-q,--quiet", opt.quiet, "no progress output");
  };

  auto* run = app.add_subcommand("run", "run one configuration (run.* keys) and write its outputs");
  add_common(run, run_opt);
  auto* sweep = app.add_subcommand("sweep", "run the sweep grid and write summary.csv, iterations.csv, manifest.json");
  add_common(sweep, sweep_opt);

  std::string plot_input, plot_figure = "all", plot_output;
  auto* plot = app.add_subcommand("plotdata", "write long-format plot tables from a sweep directory");
  plot->add_option("-i,--input", plot_input, "sweep output directory")->required()->check(CLI::ExistingDirectory);
  plot->add_option("-f,--figure", plot_figure, "pc_curve, snr_curve, baseline_compare or all");
  plot->add_option("-o,--output", plot_output, "destination directory (default: the input directory)");

  auto* validate = app.add_subcommand("validate", "run the invariant battery on a small problem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(run_opt);
    if (*sweep) return cmd_sweep(sweep_opt);
    if (*plot) return cmd_plotdata(plot_input, plot_figure, plot_output);
    if (*validate) return cmd_validate();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
