// QuanTimed-DSGD and the DSGD / Q-DSGD / asynchronous DSGD baselines.
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quantimed/compute_model.hpp"
#include "quantimed/metrics.hpp"
#include "quantimed/objectives.hpp"
#include "quantimed/quantize.hpp"
#include "quantimed/topology.hpp"

namespace quantimed {

enum class Algorithm { kQuanTimed, kDsgd, kQdsgd, kAsync };

const char* to_string(Algorithm algo);
Algorithm parse_algorithm(const std::string& name);

enum class Schedule { kConvex, kNonconvex, kConstant };

const char* to_string(Schedule schedule);

struct StepSizes {
  double alpha = 1.0;
  double eps = 1.0;
  Schedule schedule = Schedule::kConstant;
};

/// alpha = T^(-delta/2), eps = T^(-3 delta/2), delta in (0, 1/2).
StepSizes stepsizes_convex(std::uint64_t T, double delta);
/// alpha = T^(-1/6), eps = T^(-1/2).
StepSizes stepsizes_nonconvex(std::uint64_t T);
StepSizes stepsizes_constant(double alpha, double eps);

/// Everything that stays fixed over a run.
struct Network {
  const Graph& graph;
  const MixingMatrix& mixing;
  const Objective& objective;
  const DataShards& data;
  const SpeedModel& speed;
  std::optional<QuantizerSpec> quantizer;  // nullopt: exact exchange
  double comm_seconds = 0.0;               // per synchronous round
  std::uint64_t seed = 0;
  std::vector<SpeedModel> node_speeds = {};  // optional per-node override of `speed`
};

const SpeedModel& speed_of(const Network& net, std::size_t node);

/// Messages z_i = Q(x_i) for every node (quantization stream per node and
/// iteration). Bytes count one message per directed edge.
struct Exchange {
  Eigen::MatrixXd messages;
  std::size_t clamped = 0;
  std::uint64_t bytes = 0;
};

Exchange exchange_models(const Eigen::MatrixXd& models, const Network& net, std::uint64_t iteration);

struct LocalGradients {
  Eigen::MatrixXd gradients;  // column i: node i's stochastic gradient
  std::vector<std::size_t> batch_sizes;
  std::vector<double> speeds;
};

/// Each node draws V_i, takes floor(V_i T_d) (capped at m) samples with
/// replacement and averages their gradients.
LocalGradients deadline_gradients(const Eigen::MatrixXd& models, const Network& net, double deadline,
                                  std::uint64_t iteration);
/// Fixed batch b at every node; speeds are still drawn for timing.
LocalGradients fixed_batch_gradients(const Eigen::MatrixXd& models, const Network& net, std::size_t batch,
                                     std::uint64_t iteration);

/// x_i' = (1 - eps + eps w_ii) x_i + eps sum_{j in N_i} w_ij z_j - alpha eps g_i.
Eigen::MatrixXd quantimed_update(const Eigen::MatrixXd& models, const Eigen::MatrixXd& messages,
                                 const Eigen::MatrixXd& gradients, const MixingMatrix& w, const StepSizes& sizes);
/// x_i' = sum_j w_ij x_j - alpha g_i.
Eigen::MatrixXd dsgd_update(const Eigen::MatrixXd& models, const Eigen::MatrixXd& gradients, const MixingMatrix& w,
                            double alpha);

struct StepResult {
  Eigen::MatrixXd models;
  Eigen::MatrixXd messages;
  Eigen::MatrixXd gradients;
  std::vector<std::size_t> batch_sizes;
  double round_time = 0.0;
  std::uint64_t bytes = 0;
  std::size_t clamped = 0;
};

StepResult quantimed_step(const Eigen::MatrixXd& models, const Network& net, const StepSizes& sizes, double deadline,
                          std::uint64_t iteration);
StepResult qdsgd_step(const Eigen::MatrixXd& models, const Network& net, const StepSizes& sizes, std::size_t batch,
                      std::uint64_t iteration);
/// Unquantized regardless of net.quantizer.
StepResult dsgd_step(const Eigen::MatrixXd& models, const Network& net, double alpha, std::size_t batch,
                     std::uint64_t iteration);

struct RunPlan {
  Algorithm algorithm = Algorithm::kQuanTimed;
  std::uint64_t iterations = 0;  // T, synchronous algorithms
  StepSizes sizes;
  double deadline = 0.0;     // quantimed
  std::size_t batch = 1;     // baselines
  std::size_t record_every = 1;
  double time_budget = 0.0;  // async
  std::size_t async_samples = 200;
  std::optional<Eigen::MatrixXd> initial;  // default: zeros
};

struct Trace {
  std::vector<MetricsRow> rows;
  Eigen::MatrixXd final_models;
  std::size_t clamped = 0;
  std::uint64_t updates = 0;  // async events processed or synchronous iterations
};

/// Synchronous driver; dispatches to async_dsgd_run for Algorithm::kAsync.
Trace run(const RunPlan& plan, const Network& net);

/// Event-driven asynchronous DSGD. A node firing at time t reads, for each
/// neighbor, the newest model published strictly before t.
Trace async_dsgd_run(const RunPlan& plan, const Network& net);

}  // namespace quantimed
