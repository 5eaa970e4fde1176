// Loss families, the per-node sample partition, and gradient oracles.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quantimed/rng.hpp"

namespace quantimed {

enum class ObjectiveFamily { kQuadratic, kLogistic, kMlp };

const char* to_string(ObjectiveFamily family);
ObjectiveFamily parse_family(const std::string& name);

/// Samples are columns of `features`; node i owns the m global sample
/// indices in `nodes[i]`.
struct DataShards {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  std::vector<std::vector<std::size_t>> nodes;
  std::string source;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t samples_per_node() const { return nodes.empty() ? 0 : nodes.front().size(); }
  std::size_t total_samples() const { return node_count() * samples_per_node(); }
  std::size_t global_index(std::size_t node, std::size_t local) const { return nodes.at(node).at(local); }
};

/// Contiguous partition: node i owns samples [i m, (i + 1) m).
std::vector<std::vector<std::size_t>> contiguous_partition(std::size_t n, std::size_t m);

struct Objective {
  ObjectiveFamily family = ObjectiveFamily::kQuadratic;
  std::size_t dimension = 0;  // model parameters p
  double ridge = 0.0;         // logistic only
  std::size_t in_dim = 0;     // mlp only
  std::size_t hidden = 0;     // mlp only

  double smoothness = 0.0;  // K
  bool smoothness_is_estimate = false;
  std::optional<double> strong_convexity;  // mu, convex families only
  std::optional<Eigen::VectorXd> optimum;  // x* of the global empirical loss
  bool optimum_is_numeric = false;
  std::optional<Eigen::VectorXd> teacher;  // mlp: realizable generating weights
};

/// l(x, c) = 0.5 ||x - c||^2 with centers drawn N(0, scale^2 I).
struct Problem {
  Objective objective;
  DataShards shards;
};

Problem make_quadratic(std::size_t n, std::size_t m, std::size_t p, std::uint64_t seed, double center_scale = 1.0);
/// Centers given explicitly (one column per sample, contiguous partition).
Problem make_quadratic(std::size_t n, std::size_t m, const Eigen::MatrixXd& centers);

/// l(x, (a, y)) = log(1 + exp(-y x'a)) + ridge / 2 ||x||^2; labels drawn from a
/// logistic teacher on Gaussian features.
Problem make_logistic(std::size_t n, std::size_t m, std::size_t p, std::uint64_t seed, double ridge);
Problem make_logistic(std::size_t n, std::size_t m, const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                      double ridge);
/// Comma-separated rows, optional header, last column the +-1 label. The first
/// n m rows are dealt to nodes round-robin.
Problem make_logistic_csv(const std::filesystem::path& csv, std::size_t n, std::size_t m, double ridge);

/// One-hidden-layer tanh network with squared loss on teacher labels.
/// Parameter layout: [W1 (hidden x in_dim, column-major), b1, v, c].
Problem make_mlp(std::size_t n, std::size_t m, std::size_t in_dim, std::size_t hidden, std::uint64_t seed);
Problem make_mlp(std::size_t n, std::size_t m, std::size_t in_dim, std::size_t hidden,
                 const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets);
std::size_t mlp_parameter_count(std::size_t in_dim, std::size_t hidden);
/// Network output for one input.
double mlp_forward(const Objective& obj, const Eigen::VectorXd& x, const Eigen::VectorXd& input);

double sample_loss(const Objective& obj, const DataShards& data, std::size_t sample, const Eigen::VectorXd& x);
/// acc += grad l(x, theta_sample)
void add_sample_gradient(const Objective& obj, const DataShards& data, std::size_t sample, const Eigen::VectorXd& x,
                         Eigen::Ref<Eigen::VectorXd> acc);
Eigen::VectorXd sample_gradient(const Objective& obj, const DataShards& data, std::size_t sample,
                                const Eigen::VectorXd& x);

double local_loss(const Objective& obj, const DataShards& data, std::size_t node, const Eigen::VectorXd& x);
Eigen::VectorXd local_full_gradient(const Objective& obj, const DataShards& data, std::size_t node,
                                    const Eigen::VectorXd& x);
double global_loss(const Objective& obj, const DataShards& data, const Eigen::VectorXd& x);
Eigen::VectorXd global_gradient(const Objective& obj, const DataShards& data, const Eigen::VectorXd& x);

struct GradSample {
  std::size_t node = 0;
  std::uint64_t iteration = 0;
  std::vector<std::size_t> batch;  // local indices in [0, m)
  Eigen::VectorXd gradient;

  std::size_t batch_size() const { return batch.size(); }
};

/// `size` local indices drawn uniformly with replacement.
std::vector<std::size_t> draw_batch(std::size_t m, std::size_t size, Rng& rng);

/// Mean gradient over the batch; the zero vector when the batch is empty.
GradSample deadline_stochastic_gradient(const Objective& obj, const DataShards& data, std::size_t node,
                                        const Eigen::VectorXd& x, std::span<const std::size_t> batch,
                                        std::uint64_t iteration = 0);

/// Mean over all N samples of ||grad l(x, theta) - grad L_N(x)||^2.
double gradient_variance(const Objective& obj, const DataShards& data, const Eigen::VectorXd& x);

/// Power iteration on finite-difference Hessian-vector products at a few
/// sampled (point, sample) pairs; returns the largest curvature seen.
double estimate_smoothness(const Objective& obj, const DataShards& data, std::uint64_t seed, int samples = 8,
                           int iterations = 30);

/// min_x f_i(x): exact for the quadratic family, otherwise `steps` gradient
/// descent steps with step 1/K from the origin (an estimate).
double local_minimum_value(const Objective& obj, const DataShards& data, std::size_t node, int steps = 200);

/// {"n":..,"m":..,"source":"..","nodes":[[...],...]}
std::string dump_shards(const DataShards& data);

}  // namespace quantimed
