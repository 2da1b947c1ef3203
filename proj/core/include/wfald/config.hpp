#pragma once

// Experiment description and its text format.
//
// A config file is a flat list of `key = value` lines. Keys are dotted
// (`run.eta`, `channel.snr_db`, `sweep.pc_grid`); `#` starts a comment; list
// values are comma separated. Command-line overrides use the same
// `key=value` form and are applied after the file. Every key has a default,
// so an empty file describes the reference experiment (K = 30, d = 5,
// N = 1200, eta = 3e-3, p_b = 0.4, S = 200, S_b = 100, h = 1).

#include "wfald/protocol.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wfald {

struct SweepSpec {
  RunConfig base;
  std::vector<double> pc_grid;
  std::vector<double> snr_db_grid;
  std::vector<Algorithm> algorithms;
  std::size_t replicates = 100;
  std::filesystem::path output_dir = "wfald_out";

  // Throws ConfigError naming the offending key.
  void validate() const;
  std::size_t grid_size() const { return pc_grid.size() * snr_db_grid.size() * algorithms.size(); }
};

// Parses config text plus overrides. Unknown keys and out-of-range values
// throw ConfigError with the key path.
SweepSpec parse_config_text(std::string_view text, const std::vector<std::string>& overrides = {});
SweepSpec parse_config(const std::filesystem::path& file, const std::vector<std::string>& overrides = {});

// Canonical text of a fully resolved spec (all keys, fixed order). Parsing it
// back gives the same spec.
std::string to_config_text(const SweepSpec& spec);

// Number formatting shared by every file writer: shortest round-trip form,
// "inf"/"-inf"/"nan" for non-finite values.
std::string format_number(double x);

}  // namespace wfald
