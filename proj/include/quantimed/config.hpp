// Experiment configuration: flat `section.key = value` text.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "quantimed/algorithms.hpp"
#include "quantimed/objectives.hpp"

namespace quantimed {

/// Invalid configuration; line is 1-based, 0 when not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  Algorithm algo = Algorithm::kQuanTimed;

  // run.*
  std::optional<std::uint64_t> iterations;  // T
  std::optional<double> time_budget;        // async only
  std::size_t async_samples = 200;
  std::size_t record_every = 1;

  // objective.*
  ObjectiveFamily family = ObjectiveFamily::kQuadratic;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t p = 0;  // model dimension, or the input dimension for mlp
  std::size_t hidden = 10;
  double ridge = 0.01;
  double center_scale = 1.0;
  std::string csv;
  std::optional<std::uint64_t> data_seed;

  // topology.*
  std::string topology = "erdos_renyi";
  double p_c = 0.4;
  std::optional<double> kappa;
  double margin = 0.2;
  std::optional<std::uint64_t> topology_seed;

  // quantizer.* (absent: exact exchange)
  std::optional<int> bits;
  std::optional<double> eta;
  std::optional<double> lo;

  // speed.*
  std::string speed = "uniform";
  double speed_lo = 10.0;
  double speed_hi = 90.0;
  double speed_value = 50.0;

  // compute.*
  std::optional<double> batch;     // b
  std::optional<double> deadline;  // T_d
  double tc = 0.0;
  bool per_degree_comm = false;

  // step.*
  Schedule schedule = Schedule::kConvex;
  std::optional<double> delta;
  std::optional<double> alpha;
  std::optional<double> eps;
  double alpha_scale = 1.0;
  double eps_scale = 1.0;

  // init.*
  std::string init = "zero";
  double init_scale = 0.0;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and validates. Later assignments to a key override earlier ones,
/// so a sweep variant is a base file followed by override lines.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// Canonical text; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);

/// Re-runs validation on a programmatically built config.
void validate(const ExperimentConfig& config);

}  // namespace quantimed
