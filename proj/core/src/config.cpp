#include "wfald/config.hpp"

#include "wfald/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace wfald {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& key, std::string_view v) {
  v = trim(v);
  if (v.starts_with('+')) v.remove_prefix(1);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key, "expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, std::string_view v) {
  v = trim(v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key, "expected true/false, got '" + std::string(v) + "'");
}

std::vector<double> parse_list(const std::string& key, std::string_view v) {
  std::vector<double> out;
  for (auto item : split(v, ',')) out.push_back(parse_double(key, item));
  return out;
}

using Setter = std::function<void(SweepSpec&, const std::string& key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"run.algorithm", [](SweepSpec& s, const std::string&, std::string_view v) {
         s.base.algorithm = parse_algorithm(trim(v));
       }},
      {"run.K", [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.K = parse_uint(k, v); }},
      {"run.d", [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.d = parse_uint(k, v); }},
      {"run.N", [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.N = parse_uint(k, v); }},
      {"run.eta", [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.eta = parse_double(k, v); }},
      {"run.p_c", [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.p_c = parse_double(k, v); }},
      {"run.p_b", [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.p_b = parse_double(k, v); }},
      {"run.S", [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.S = parse_uint(k, v); }},
      {"run.S_b", [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.S_b = parse_uint(k, v); }},
      {"run.master_seed",
       [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.master_seed = parse_uint(k, v); }},
      {"run.replicates",
       [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.replicates = parse_uint(k, v); }},
      {"run.tau", [](SweepSpec& s, const std::string& k, std::string_view v) {
         if (trim(v) == "schedule" || trim(v).empty()) {
           s.base.tau_override.reset();
         } else {
           s.base.tau_override = parse_double(k, v);
         }
       }},
      {"run.final_aggregation", [](SweepSpec& s, const std::string& k, std::string_view v) {
         v = trim(v);
         if (v == "auto") {
           s.base.final_aggregation = FinalAggregation::automatic;
         } else if (v == "on") {
           s.base.final_aggregation = FinalAggregation::on;
         } else if (v == "off") {
           s.base.final_aggregation = FinalAggregation::off;
         } else {
           throw ConfigError(k, "expected auto, on or off");
         }
       }},
      {"run.record_drift",
       [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.record_drift = parse_bool(k, v); }},
      {"run.record_channel_log", [](SweepSpec& s, const std::string& k, std::string_view v) {
         s.base.record_channel_log = parse_bool(k, v);
       }},
      {"run.thinning",
       [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.thinning = parse_uint(k, v); }},
      {"run.workers",
       [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.workers = parse_uint(k, v); }},
      {"channel.snr_db",
       [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.snr_db = parse_double(k, v); }},
      {"channel.P", [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.P = parse_double(k, v); }},
      {"channel.gain", [](SweepSpec& s, const std::string& k, std::string_view v) {
         v = trim(v);
         if (v == "constant") {
           s.base.gain_model = GainModel::constant;
         } else if (v == "rayleigh") {
           s.base.gain_model = GainModel::rayleigh;
         } else {
           throw ConfigError(k, "expected constant or rayleigh");
         }
       }},
      {"channel.gain_value",
       [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.gain_value = parse_double(k, v); }},
      {"model.data_seed",
       [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.data_seed = parse_uint(k, v); }},
      {"model.noise_std",
       [](SweepSpec& s, const std::string& k, std::string_view v) { s.base.noise_std = parse_double(k, v); }},
      {"model.theta_star", [](SweepSpec& s, const std::string& k, std::string_view v) {
         const auto values = parse_list(k, v);
         s.base.theta_star = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
       }},
      {"model.region_radius_sd", [](SweepSpec& s, const std::string& k, std::string_view v) {
         s.base.region_radius_sd = parse_double(k, v);
       }},
      {"model.test_per_device", [](SweepSpec& s, const std::string& k, std::string_view v) {
         s.base.test_per_device = parse_uint(k, v);
       }},
      {"sweep.pc_grid", [](SweepSpec& s, const std::string& k, std::string_view v) { s.pc_grid = parse_list(k, v); }},
      {"sweep.snr_db_grid",
       [](SweepSpec& s, const std::string& k, std::string_view v) { s.snr_db_grid = parse_list(k, v); }},
      {"sweep.algorithms", [](SweepSpec& s, const std::string&, std::string_view v) {
         s.algorithms.clear();
         for (auto name : split(v, ',')) s.algorithms.push_back(parse_algorithm(name));
       }},
      {"sweep.output_dir",
       [](SweepSpec& s, const std::string&, std::string_view v) { s.output_dir = std::string(trim(v)); }},
  };
  return table;
}

void apply(SweepSpec& spec, std::string_view line, std::map<std::string, bool, std::less<>>& seen,
           const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) throw ConfigError("", where + ": expected 'key = value', got '" + std::string(line) + "'");
  const std::string key(trim(line.substr(0, eq)));
  const std::string_view value = trim(line.substr(eq + 1));
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError(key, "unknown key (" + where + ")");
  it->second(spec, key, value);
  seen[key] = true;
}

}  // namespace

void SweepSpec::validate() const {
  base.validate();
  if (pc_grid.empty()) throw ConfigError("sweep.pc_grid", "must not be empty");
  for (double pc : pc_grid) {
    if (!(pc > 0.0 && pc <= 1.0)) throw ConfigError("sweep.pc_grid", "value " + format_number(pc) + " outside (0, 1]");
  }
  if (snr_db_grid.empty()) throw ConfigError("sweep.snr_db_grid", "must not be empty");
  for (double snr : snr_db_grid) {
    if (std::isnan(snr) || snr == -std::numeric_limits<double>::infinity()) {
      throw ConfigError("sweep.snr_db_grid", "value must be a number or inf");
    }
  }
  if (algorithms.empty()) throw ConfigError("sweep.algorithms", "must not be empty");
  if (replicates == 0) throw ConfigError("run.replicates", "must be >= 1");
}

SweepSpec parse_config_text(std::string_view text, const std::vector<std::string>& overrides) {
  SweepSpec spec;
  std::map<std::string, bool, std::less<>> seen;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    const auto hash = raw.find('#');
    const auto line = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    apply(spec, line, seen, "line " + std::to_string(line_no));
  }
  for (const auto& o : overrides) apply(spec, trim(o), seen, "override");

  if (!seen.contains("sweep.pc_grid")) spec.pc_grid = {spec.base.p_c};
  if (!seen.contains("sweep.snr_db_grid")) spec.snr_db_grid = {spec.base.snr_db};
  if (!seen.contains("sweep.algorithms")) spec.algorithms = {spec.base.algorithm};
  spec.replicates = spec.base.replicates;
  spec.validate();
  return spec;
}

SweepSpec parse_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  std::ifstream in(file);
  if (!in) throw ConfigError("", "cannot open config file " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), overrides);
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, ptr);
}

namespace {

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += format_number(values[i]);
  }
  return out;
}

}  // namespace

std::string to_config_text(const SweepSpec& spec) {
  const RunConfig& c = spec.base;
  std::ostringstream out;
  out << "run.algorithm = " << to_string(c.algorithm) << "\n";
  out << "run.K = " << c.K << "\n";
  out << "run.d = " << c.d << "\n";
  out << "run.N = " << c.N << "\n";
  out << "run.eta = " << format_number(c.eta) << "\n";
  out << "run.p_c = " << format_number(c.p_c) << "\n";
  out << "run.p_b = " << format_number(c.p_b) << "\n";
  out << "run.S = " << c.S << "\n";
  out << "run.S_b = " << c.S_b << "\n";
  out << "run.master_seed = " << c.master_seed << "\n";
  out << "run.replicates = " << c.replicates << "\n";
  out << "run.tau = " << (c.tau_override ? format_number(*c.tau_override) : std::string("schedule")) << "\n";
  out << "run.final_aggregation = "
      << (c.final_aggregation == FinalAggregation::automatic ? "auto"
          : c.final_aggregation == FinalAggregation::on      ? "on"
                                                             : "off")
      << "\n";
  out << "run.record_drift = " << (c.record_drift ? "true" : "false") << "\n";
  out << "run.record_channel_log = " << (c.record_channel_log ? "true" : "false") << "\n";
  out << "run.thinning = " << c.thinning << "\n";
  out << "channel.snr_db = " << format_number(c.snr_db) << "\n";
  out << "channel.P = " << format_number(c.P) << "\n";
  out << "channel.gain = " << (c.gain_model == GainModel::constant ? "constant" : "rayleigh") << "\n";
  out << "channel.gain_value = " << format_number(c.gain_value) << "\n";
  out << "model.data_seed = " << c.data_seed << "\n";
  out << "model.noise_std = " << format_number(c.noise_std) << "\n";
  out << "model.theta_star = "
      << join(std::vector<double>(c.theta_star.data(), c.theta_star.data() + c.theta_star.size())) << "\n";
  out << "model.region_radius_sd = " << format_number(c.region_radius_sd) << "\n";
  out << "model.test_per_device = " << c.test_per_device << "\n";
  out << "sweep.pc_grid = " << join(spec.pc_grid) << "\n";
  out << "sweep.snr_db_grid = " << join(spec.snr_db_grid) << "\n";
  out << "sweep.algorithms = ";
  for (std::size_t i = 0; i < spec.algorithms.size(); ++i) out << (i ? "," : "") << to_string(spec.algorithms[i]);
  out << "\n";
  out << "sweep.output_dir = " << spec.output_dir.string() << "\n";
  return out.str();
}

}  // namespace wfald
