#include "wfald/harness.hpp"

#include "wfald/errors.hpp"
#include "wfald/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

#ifndef WFALD_VERSION
#define WFALD_VERSION "0.0.0"
#endif

namespace wfald {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? kNaN : acc / static_cast<double>(v.size());
}

bool has_bound(Algorithm a) { return a == Algorithm::wfald || a == Algorithm::fald; }

}  // namespace

Stat mean_and_se(const std::vector<double>& values) {
  Stat st;
  if (values.empty()) return {kNaN, kNaN};
  st.mean = mean_of(values);
  if (values.size() < 2) {
    st.se = 0.0;
    return st;
  }
  double ss = 0.0;
  for (double x : values) ss += (x - st.mean) * (x - st.mean);
  const double n = static_cast<double>(values.size());
  st.se = std::sqrt(ss / (n - 1.0) / n);
  return st;
}

std::uint64_t config_hash(const SweepSpec& spec) {
  SweepSpec canonical = spec;
  canonical.output_dir.clear();
  const std::string text = to_config_text(canonical);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

GridRow aggregate(const RunConfig& config, const Problem& problem, const std::vector<ReplicateResult>& reps) {
  GridRow row;
  row.algorithm = config.algorithm;
  row.p_c = config.p_c;
  row.snr_db = config.snr_db;
  row.replicates = reps.size();

  std::vector<double> mse, te_ens, te_freq, vt, vc, beta, alpha;
  for (const auto& r : reps) {
    mse.push_back(r.metrics.mse);
    te_ens.push_back(r.metrics.test_error_ensemble);
    te_freq.push_back(r.metrics.test_error_frequentist);
    if (!r.v_theta.empty()) {
      vt.push_back(r.metrics.v_theta_mean);
      vc.push_back(r.metrics.v_c_mean);
    }
    if (r.wireless_rounds > 0) {
      beta.push_back(r.metrics.beta_mean);
      alpha.push_back(r.metrics.alpha_mean);
    }
    row.wireless_rounds += r.wireless_rounds;
    row.power_checks += r.power_checks;
  }
  row.mse = mean_and_se(mse);
  row.test_error_ensemble = mean_and_se(te_ens);
  row.test_error_frequentist = mean_and_se(te_freq);
  row.v_theta = mean_and_se(vt);
  row.v_c = mean_and_se(vc);
  row.beta = mean_and_se(beta);
  row.alpha = mean_and_se(alpha);

  const bool drift = !vt.empty();
  const RegularityConstants& constants = problem.constants;
  if (drift) {
    const DriftBounds b = drift_bounds(constants, config.eta, config.p_c, config.K, config.d, row.v_theta.mean);
    row.v_c_bound = b.v_c_bound;
    row.v_theta_bound = b.v_theta_bound;
  } else {
    row.v_c_bound = row.v_theta_bound = kNaN;
  }

  const std::size_t S = config.S;
  const std::size_t d = config.d;
  row.iterations.resize(S + 1);

  // Per-round channel statistics over the replicates that aggregated.
  std::vector<double> beta_round(S, 0.0), alpha_round(S, 0.0), rate(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    std::size_t n = 0;
    for (const auto& r : reps) {
      if (r.flags[s]) {
        ++n;
        beta_round[s] += r.beta[s];
        alpha_round[s] += r.alpha[s];
      }
    }
    rate[s] = static_cast<double>(n) / static_cast<double>(reps.size());
    if (n > 0) {
      beta_round[s] /= static_cast<double>(n);
      alpha_round[s] /= static_cast<double>(n);
    }
  }

  BoundInputs bound;
  bound.L = constants.L;
  bound.mu = constants.mu;
  bound.G = constants.G;
  bound.sigma = constants.sigma;
  bound.eta = config.eta;
  bound.p_c = config.p_c;
  bound.K = config.K;
  bound.d = d;
  bound.w2_init = w2_squared(GaussianDist{Vector::Zero(static_cast<Eigen::Index>(d)),
                                          Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))},
                             problem.posterior);

  std::vector<Vector> samples(reps.size());
  double literal_beta = 0.0;
  for (std::size_t s = 0; s <= S; ++s) {
    IterationRow& it = row.iterations[s];
    it.s = s;
    std::vector<double> sq;
    sq.reserve(reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i) {
      sq.push_back(reps[i].sq_error[s]);
      samples[i] = reps[i].averages[s];
    }
    it.mse = mean_of(sq);
    it.w2_sq = reps.size() >= d + 1 ? w2_squared(empirical_gaussian(samples), problem.posterior) : kNaN;

    if (s < S) {
      it.beta = beta_round[s];
      it.alpha = alpha_round[s];
      it.agg_rate = rate[s];
    } else {
      it.beta = it.alpha = it.agg_rate = kNaN;
    }

    if (drift && s < S) {
      std::vector<double> a, b;
      for (const auto& r : reps) {
        a.push_back(r.v_theta[s]);
        b.push_back(r.v_c[s]);
      }
      it.v_theta = mean_of(a);
      it.v_c = mean_of(b);
      const DriftBounds db = drift_bounds(constants, config.eta, config.p_c, config.K, d, it.v_theta);
      it.v_c_bound = db.v_c_bound;
      it.v_theta_bound = db.v_theta_bound;
    } else {
      it.v_theta = it.v_c = it.v_c_bound = it.v_theta_bound = kNaN;
    }

    if (has_bound(config.algorithm)) {
      // Realized reading: beta^[j] of each round. Literal reading: the most
      // recent round's beta held constant across the sum.
      if (s > 0 && rate[s - 1] > 0.0) literal_beta = beta_round[s - 1];
      try {
        bound.s = s;
        bound.beta_sequence.assign(beta_round.begin(), beta_round.begin() + static_cast<std::ptrdiff_t>(s));
        it.bound = theorem1_bound(bound);
        bound.beta_sequence.assign(s, literal_beta);
        it.bound_literal = theorem1_bound(bound);
      } catch (const BoundVacuousError&) {
        it.bound = it.bound_literal = kNaN;
      }
    } else {
      it.bound = it.bound_literal = kNaN;
    }
  }
  return row;
}

SweepResult run_sweep(const SweepSpec& spec, const ProgressFn& progress) {
  spec.validate();
  SweepResult result;
  result.spec = spec;
  result.config_hash = config_hash(spec);

  const Problem problem = make_problem(spec.base);
  result.constants = problem.constants;

  std::mutex progress_mutex;
  std::size_t done = 0;
  const std::size_t total = spec.grid_size() * spec.replicates;

  for (Algorithm algorithm : spec.algorithms) {
    for (double snr_db : spec.snr_db_grid) {
      for (double p_c : spec.pc_grid) {
        RunConfig config = spec.base;
        config.algorithm = algorithm;
        config.snr_db = snr_db;
        config.p_c = p_c;
        config.replicates = spec.replicates;
        config.record_channel_log = false;

        std::vector<ReplicateResult> reps(spec.replicates);
        parallel_for(spec.replicates, config.workers, [&](std::size_t i) {
          try {
            reps[i] = run_replicate(config, problem, i);
          } catch (const std::exception& e) {
            throw ProtocolError(std::string(to_string(algorithm)) + " p_c=" + format_number(p_c) +
                                " snr_db=" + format_number(snr_db) + " replicate " + std::to_string(i) +
                                " seed " + hex(replicate_seed(config.master_seed, i)) + ": " + e.what());
          }
          reps[i].particles = Trajectory();
          if (progress) {
            std::lock_guard<std::mutex> lock(progress_mutex);
            progress(++done, total);
          }
        });
        result.rows.push_back(aggregate(config, problem, reps));
      }
    }
  }
  return result;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void check_written(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

const char* kSummaryHeader =
    "algorithm,p_c,snr_db,replicates,mse_mean,mse_se,test_error_ensemble_mean,test_error_ensemble_se,"
    "test_error_frequentist_mean,test_error_frequentist_se,v_theta_mean,v_theta_se,v_c_mean,v_c_se,v_c_bound,v_theta_bound,"
    "beta_mean,beta_se,alpha_mean,alpha_se,wireless_rounds,power_checks,power_violations";

const char* kIterationHeader =
    "algorithm,p_c,snr_db,s,mse,w2_sq,bound,bound_literal,v_theta,v_c,v_c_bound,v_theta_bound,beta,alpha,agg_rate";

}  // namespace

void write_sweep(const SweepResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto f = [](double x) { return format_number(x); };

  {
    const auto path = dir / "summary.csv";
    auto out = open_out(path);
    out << kSummaryHeader << "\n";
    for (const auto& r : result.rows) {
      out << to_string(r.algorithm) << ',' << f(r.p_c) << ',' << f(r.snr_db) << ',' << r.replicates << ','
          << f(r.mse.mean) << ',' << f(r.mse.se) << ',' << f(r.test_error_ensemble.mean) << ','
          << f(r.test_error_ensemble.se) << ',' << f(r.test_error_frequentist.mean) << ','
          << f(r.test_error_frequentist.se) << ',' << f(r.v_theta.mean) << ',' << f(r.v_theta.se) << ','
          << f(r.v_c.mean) << ',' << f(r.v_c.se) << ',' << f(r.v_c_bound) << ',' << f(r.v_theta_bound) << ','
          << f(r.beta.mean) << ',' << f(r.beta.se) << ',' << f(r.alpha.mean) << ',' << f(r.alpha.se) << ','
          << r.wireless_rounds << ',' << r.power_checks << ',' << r.power_violations << "\n";
    }
    check_written(out, path);
  }
  {
    const auto path = dir / "iterations.csv";
    auto out = open_out(path);
    out << kIterationHeader << "\n";
    for (const auto& r : result.rows) {
      for (const auto& it : r.iterations) {
        out << to_string(r.algorithm) << ',' << f(r.p_c) << ',' << f(r.snr_db) << ',' << it.s << ','
            << f(it.mse) << ',' << f(it.w2_sq) << ',' << f(it.bound) << ',' << f(it.bound_literal) << ','
            << f(it.v_theta) << ',' << f(it.v_c) << ',' << f(it.v_c_bound) << ',' << f(it.v_theta_bound) << ','
            << f(it.beta) << ',' << f(it.alpha) << ',' << f(it.agg_rate) << "\n";
      }
    }
    check_written(out, path);
  }
  {
    const auto path = dir / "config.cfg";
    auto out = open_out(path);
    out << to_config_text(result.spec);
    check_written(out, path);
  }
  {
    nlohmann::ordered_json m;
    m["schema_version"] = kSchemaVersion;
    m["tool"] = "wfald";
    m["tool_version"] = WFALD_VERSION;
    m["config_hash"] = hex(result.config_hash);
    m["master_seed"] = result.spec.base.master_seed;
    m["data_seed"] = result.spec.base.data_seed;
    m["seed_derivation"] = {
        {"mix", "splitmix64"},
        {"engine", "mt19937_64 seeded with the derived stream seed; normals via std::normal_distribution"},
        {"rule",
         "h = splitmix64(master); for each path component c: h = splitmix64(h ^ splitmix64(c + "
         "0x632BE59BD9B4E019)). replicate seed = derive(master_seed, [8, r]) and is shared by every grid "
         "point; streams derive from it with path [tag, index]: round_flags [3,0], common_noise [4,0], "
         "channel noise [5,0], channel gains [5,1], device batches [6,k], device noise [7,k]; data uses "
         "derive(data_seed, [1,0]) and the test set derive(data_seed, [2,0])"},
    };
    std::vector<std::string> seeds;
    for (std::size_t r = 0; r < result.spec.replicates; ++r) {
      seeds.push_back(hex(replicate_seed(result.spec.base.master_seed, r)));
    }
    m["replicate_seeds"] = seeds;
    nlohmann::ordered_json grid = nlohmann::ordered_json::array();
    for (const auto& r : result.rows) {
      grid.push_back({{"algorithm", std::string(to_string(r.algorithm))},
                      {"p_c", f(r.p_c)},
                      {"snr_db", f(r.snr_db)}});
    }
    m["grid"] = grid;
    m["constants"] = {{"L", f(result.constants.L)},
                      {"mu", f(result.constants.mu)},
                      {"G", f(result.constants.G)},
                      {"region_radius", f(result.constants.region_radius)},
                      {"sigma_sq_sum", f(result.constants.sigma_sq_sum())}};
    m["files"] = {{"summary", "summary.csv"}, {"iterations", "iterations.csv"}, {"config", "config.cfg"}};
    m["columns"] = {{"summary", kSummaryHeader}, {"iterations", kIterationHeader}};

    const auto path = dir / "manifest.json";
    auto out = open_out(path);
    out << m.dump(2) << "\n";
    check_written(out, path);
  }
}

void write_channel_log(const ReplicateResult& replicate, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  auto out = open_out(file);
  out << "s,alpha,beta,noise_var,snr,power_limited,device,gain,payload_norm\n";
  for (const auto& r : replicate.channel_log) {
    for (std::size_t k = 0; k < r.gains.size(); ++k) {
      out << r.s << ',' << format_number(r.alpha) << ',' << format_number(r.beta) << ','
          << format_number(r.noise_var) << ',' << format_number(r.snr) << ',' << (r.power_limited ? 1 : 0) << ','
          << k << ',' << format_number(r.gains[k]) << ',' << format_number(r.payload_norms[k]) << "\n";
    }
  }
  check_written(out, file);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double to_double(const std::string& s) {
  if (s == "nan") return kNaN;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

}  // namespace

SweepResult load_sweep(const std::filesystem::path& dir) {
  SweepResult result;
  const auto cfg = dir / "config.cfg";
  if (std::filesystem::exists(cfg)) result.spec = parse_config(cfg);

  const auto path = dir / "summary.csv";
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kSummaryHeader) throw ConfigError("", path.string() + ": unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 23) throw ConfigError("", path.string() + ": malformed row");
    GridRow r;
    r.algorithm = parse_algorithm(c[0]);
    r.p_c = to_double(c[1]);
    r.snr_db = to_double(c[2]);
    r.replicates = std::stoul(c[3]);
    r.mse = {to_double(c[4]), to_double(c[5])};
    r.test_error_ensemble = {to_double(c[6]), to_double(c[7])};
    r.test_error_frequentist = {to_double(c[8]), to_double(c[9])};
    r.v_theta = {to_double(c[10]), to_double(c[11])};
    r.v_c = {to_double(c[12]), to_double(c[13])};
    r.v_c_bound = to_double(c[14]);
    r.v_theta_bound = to_double(c[15]);
    r.beta = {to_double(c[16]), to_double(c[17])};
    r.alpha = {to_double(c[18]), to_double(c[19])};
    r.wireless_rounds = std::stoul(c[20]);
    r.power_checks = std::stoul(c[21]);
    r.power_violations = std::stoul(c[22]);
    result.rows.push_back(std::move(r));
  }
  return result;
}

std::string_view to_string(Figure f) {
  switch (f) {
    case Figure::pc_curve: return "pc_curve";
    case Figure::snr_curve: return "snr_curve";
    case Figure::baseline_compare: return "baseline_compare";
  }
  return "?";
}

Figure parse_figure(std::string_view name) {
  if (name == "pc_curve") return Figure::pc_curve;
  if (name == "snr_curve") return Figure::snr_curve;
  if (name == "baseline_compare") return Figure::baseline_compare;
  throw ConfigError("figure", "unknown figure '" + std::string(name) + "'");
}

std::vector<PlotPoint> plot_table(const SweepResult& result, Figure figure) {
  if (result.rows.empty()) throw ConfigError("figure", "sweep result is empty");
  std::vector<const GridRow*> wfald_rows, fedavg_rows;
  for (const auto& r : result.rows) {
    if (r.algorithm == Algorithm::wfald) wfald_rows.push_back(&r);
    if (r.algorithm == Algorithm::wfedavg) fedavg_rows.push_back(&r);
  }

  std::vector<PlotPoint> points;
  switch (figure) {
    case Figure::pc_curve:
    case Figure::snr_curve:
      if (wfald_rows.empty()) throw ConfigError("figure", std::string(to_string(figure)) + " needs WFALD rows");
      for (const GridRow* r : wfald_rows) {
        if (figure == Figure::pc_curve) {
          points.push_back({r->p_c, "snr_db=" + format_number(r->snr_db), r->mse.mean, r->mse.se});
        } else {
          points.push_back({r->snr_db, "p_c=" + format_number(r->p_c), r->mse.mean, r->mse.se});
        }
      }
      break;
    case Figure::baseline_compare: {
      if (wfald_rows.empty() || fedavg_rows.empty()) {
        throw ConfigError("figure", "baseline_compare needs both WFALD and WFedAvg rows");
      }
      std::map<double, int> pcs;
      for (const auto& r : result.rows) pcs[r.p_c] = 1;
      const bool tag_pc = pcs.size() > 1;
      const auto name = [&](const char* base, double pc) {
        return tag_pc ? std::string(base) + "@p_c=" + format_number(pc) : std::string(base);
      };
      for (const GridRow* r : wfald_rows) {
        points.push_back({r->snr_db, name("WFALD-ensemble", r->p_c), r->test_error_ensemble.mean,
                          r->test_error_ensemble.se});
      }
      for (const GridRow* r : fedavg_rows) {
        points.push_back({r->snr_db, name("WFedAvg", r->p_c), r->test_error_frequentist.mean,
                          r->test_error_frequentist.se});
      }
      break;
    }
  }
  std::stable_sort(points.begin(), points.end(), [](const PlotPoint& a, const PlotPoint& b) {
    return a.series != b.series ? a.series < b.series : a.x < b.x;
  });
  const bool has_axis = std::any_of(points.begin(), points.end(), [](const PlotPoint& p) { return !std::isnan(p.x); });
  if (!has_axis) throw ConfigError("figure", "no usable x values");
  return points;
}

std::filesystem::path emit_plotdata(const SweepResult& result, Figure figure, const std::filesystem::path& dir) {
  const auto points = plot_table(result, figure);
  std::filesystem::create_directories(dir);
  const auto path = dir / ("fig_" + std::string(to_string(figure)) + ".csv");
  auto out = open_out(path);
  out << "x,series,y_mean,y_stderr\n";
  for (const auto& p : points) {
    out << format_number(p.x) << ',' << p.series << ',' << format_number(p.y_mean) << ','
        << format_number(p.y_stderr) << "\n";
  }
  check_written(out, path);
  return path;
}

}  // namespace wfald
