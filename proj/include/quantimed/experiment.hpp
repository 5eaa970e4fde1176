// Resolving a configuration into a runnable network, and run records.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quantimed/algorithms.hpp"
#include "quantimed/config.hpp"

namespace quantimed {

struct DerivedValues {
  double kappa = 0.0;
  double beta = 0.0;
  double deadline = 0.0;  // T_d (quantimed), b / E[V] otherwise
  double alpha = 0.0;
  double eps = 0.0;
  double expected_inverse_speed = 0.0;
  double effective_batch = 0.0;
  double comm_seconds = 0.0;
  std::size_t dimension = 0;
  std::size_t edges = 0;

  bool operator==(const DerivedValues&) const = default;
};

/// Everything a configuration resolves to. Members are built in declaration
/// order; the Network view borrows them.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  const Graph& graph() const { return graph_; }
  const MixingMatrix& mixing() const { return mixing_; }
  const Problem& problem() const { return problem_; }
  const SpeedModel& speed() const { return speed_; }
  const std::optional<QuantizerSpec>& quantizer() const { return quantizer_; }
  const RunPlan& plan() const { return plan_; }
  const DerivedValues& derived() const { return derived_; }

  Network network() const;

 private:
  ExperimentConfig config_;
  Graph graph_;
  double kappa_;
  MixingMatrix mixing_;
  Problem problem_;
  SpeedModel speed_;
  std::optional<QuantizerSpec> quantizer_;
  RunPlan plan_;
  DerivedValues derived_;
};

struct RunRecord {
  std::string config_text;  // canonical echo, re-parses to the same config
  std::string objective_note;
  DerivedValues derived;
  std::vector<MetricsRow> rows;
  Eigen::MatrixXd final_models;
  std::string models_digest;  // FNV-1a over the final model bytes
  std::size_t clamped = 0;
  std::uint64_t updates = 0;
  double wall_seconds = 0.0;  // host time; excluded from same_result

  bool operator==(const RunRecord&) const;
};

/// Equality ignoring wall_seconds.
bool same_result(const RunRecord& a, const RunRecord& b);

RunRecord run_experiment(const ExperimentConfig& config);

/// Independent runs, results in input order. jobs > 1 runs them on threads;
/// every run stays single-threaded and deterministic.
std::vector<RunRecord> sweep(const std::vector<ExperimentConfig>& configs, std::size_t jobs = 1);

std::string models_digest(const Eigen::MatrixXd& models);

enum class RecordFormat { kCsv, kJson };

RecordFormat parse_format(const std::string& name);
/// csv for *.csv, json for *.json, otherwise `fallback`.
RecordFormat format_for_path(const std::filesystem::path& path, RecordFormat fallback);

inline constexpr const char* kCsvHeader = "iter,sim_time_s,loss,gap,consensus,grad_norm_sq,bytes";

void write_csv(std::ostream& out, const RunRecord& record);
std::string to_csv(const RunRecord& record);
std::vector<MetricsRow> read_csv_rows(std::istream& in);

std::string to_json(const RunRecord& record);
RunRecord from_json(const std::string& text);

void write_record(const RunRecord& record, const std::filesystem::path& path, RecordFormat format);
/// JSON records round-trip exactly; CSV files yield the rows only.
RunRecord read_record(const std::filesystem::path& path);

}  // namespace quantimed
