#include "wfald/errors.hpp"
#include "wfald/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace wfald;

namespace {

SweepSpec tiny_spec() {
  SweepSpec s = parse_config_text(
      "run.K = 3\nrun.d = 2\nrun.N = 30\nrun.S = 20\nrun.S_b = 10\nrun.replicates = 4\n"
      "model.theta_star = 1, -1\nmodel.test_per_device = 10\n"
      "sweep.pc_grid = 0.5, 1\nsweep.snr_db_grid = 5, 30\nsweep.algorithms = wfald, wfedavg\n");
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("wfald_unit_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("mean and standard error") {
    const Stat s = mean_and_se({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    CHECK(mean_and_se({2.0}).se == 0.0);
    CHECK(std::isnan(mean_and_se({}).mean));
  }

  TEST_CASE("grid coverage and idempotence") {
    const SweepSpec spec = tiny_spec();
    const SweepResult a = run_sweep(spec);
    CHECK(a.rows.size() == 8);
    for (const auto& r : a.rows) {
      CHECK(r.iterations.size() == 21);
      CHECK(r.replicates == 4);
    }
    const auto d1 = scratch("a"), d2 = scratch("b");
    write_sweep(a, d1);
    write_sweep(run_sweep(spec), d2);
    for (const char* f : {"summary.csv", "iterations.csv", "manifest.json", "config.cfg"}) {
      CHECK(slurp(d1 / f) == slurp(d2 / f));
    }
  }

  TEST_CASE("worker count does not change output") {
    SweepSpec spec = tiny_spec();
    const auto d1 = scratch("w1"), d2 = scratch("w3");
    write_sweep(run_sweep(spec), d1);
    spec.base.workers = 3;
    write_sweep(run_sweep(spec), d2);
    CHECK(slurp(d1 / "summary.csv") == slurp(d2 / "summary.csv"));
    CHECK(slurp(d1 / "iterations.csv") == slurp(d2 / "iterations.csv"));
    CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
  }

  TEST_CASE("config hash ignores the output directory only") {
    SweepSpec a = tiny_spec(), b = tiny_spec();
    b.output_dir = "elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    b.base.master_seed = 2;
    CHECK(config_hash(a) != config_hash(b));
  }

  TEST_CASE("different master seeds agree within error bands") {
    SweepSpec spec = tiny_spec();
    spec.pc_grid = {0.5};
    spec.snr_db_grid = {30};
    spec.algorithms = {Algorithm::wfald};
    spec.replicates = spec.base.replicates = 100;
    const SweepResult a = run_sweep(spec);
    spec.base.master_seed = 777;
    const SweepResult b = run_sweep(spec);
    const double se = std::sqrt(a.rows[0].mse.se * a.rows[0].mse.se + b.rows[0].mse.se * b.rows[0].mse.se);
    CHECK(std::abs(a.rows[0].mse.mean - b.rows[0].mse.mean) <= 3.0 * se);
  }

  TEST_CASE("load and plot") {
    const auto dir = scratch("plot");
    write_sweep(run_sweep(tiny_spec()), dir);
    const SweepResult loaded = load_sweep(dir);
    CHECK(loaded.rows.size() == 8);

    const auto pc = plot_table(loaded, Figure::pc_curve);
    CHECK(pc.size() == 4);
    CHECK(pc.front().series == "snr_db=30");
    const auto snr = plot_table(loaded, Figure::snr_curve);
    CHECK(snr.front().series == "p_c=0.5");
    const auto base = plot_table(loaded, Figure::baseline_compare);
    CHECK(base.size() == 8);

    const auto file = emit_plotdata(loaded, Figure::pc_curve, dir);
    CHECK(file.filename() == "fig_pc_curve.csv");
    const std::string text = slurp(file);
    CHECK(text.rfind("x,series,y_mean,y_stderr\n", 0) == 0);

    CHECK_THROWS_AS(plot_table(SweepResult{}, Figure::pc_curve), ConfigError);
    SweepResult only_fald = loaded;
    for (auto& r : only_fald.rows) r.algorithm = Algorithm::fald;
    CHECK_THROWS_AS(plot_table(only_fald, Figure::baseline_compare), ConfigError);
    CHECK_THROWS_AS(parse_figure("fig5"), ConfigError);
  }

  TEST_CASE("baseline series names") {
    SweepSpec spec = tiny_spec();
    spec.pc_grid = {0.5};
    const auto pts = plot_table(run_sweep(spec), Figure::baseline_compare);
    CHECK(pts.front().series == "WFALD-ensemble");
    CHECK(pts.back().series == "WFedAvg");
  }

  TEST_CASE("manifest reconstructs replicate seeds") {
    const auto dir = scratch("manifest");
    const SweepSpec spec = tiny_spec();
    write_sweep(run_sweep(spec), dir);
    const std::string m = slurp(dir / "manifest.json");
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx",
                  static_cast<unsigned long long>(derive_seed(spec.base.master_seed, {8, 3})));
    CHECK(m.find(buf) != std::string::npos);
    CHECK(m.find("\"schema_version\": 1") != std::string::npos);
  }

  TEST_CASE("bounds are reported for the Langevin samplers only") {
    const SweepResult r = run_sweep(tiny_spec());
    for (const auto& row : r.rows) {
      const bool langevin = row.algorithm == Algorithm::wfald;
      CHECK(std::isnan(row.iterations[10].bound) != langevin);
      if (langevin) CHECK(row.iterations[0].bound == row.iterations[0].w2_sq);
    }
  }
}
