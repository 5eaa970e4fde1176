// Measured quantities and theoretical rate envelopes.
#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

#include "quantimed/compute_model.hpp"
#include "quantimed/objectives.hpp"
#include "quantimed/quantize.hpp"
#include "quantimed/topology.hpp"

namespace quantimed {

// Model sets are p x n matrices: column i is node i's model. Column-major
// storage makes the flat data the stacked vector [x_1; ...; x_n].

/// M = (1/n) sum_i ||x_bar - x_i||^2.
template <typename Derived>
double consensus_error(const Eigen::MatrixBase<Derived>& models) {
  const auto mean = models.rowwise().mean().eval();
  return (models.colwise() - mean).colwise().squaredNorm().mean();
}

/// (1/n) sum_i ||x_i - x*||^2.
template <typename Derived, typename OtherDerived>
double optimality_gap(const Eigen::MatrixBase<Derived>& models, const Eigen::MatrixBase<OtherDerived>& optimum) {
  if (models.rows() != optimum.size()) throw std::invalid_argument("optimality_gap: dimension mismatch");
  return (models.colwise() - optimum.derived()).colwise().squaredNorm().mean();
}

/// Throws when the objective carries no optimum (nonconvex family).
double optimality_gap(const Eigen::MatrixXd& models, const Objective& obj);

/// Gradient of h_alpha(x) = 0.5 x'(I - W)x + alpha n F(x) in matrix form:
/// X (I - W) + alpha G, where column i of G is grad f_i(x_i).
template <typename Derived, typename GradDerived>
Eigen::MatrixXd penalty_gradient(const MixingMatrix& w, double alpha, const Eigen::MatrixBase<Derived>& models,
                                 const Eigen::MatrixBase<GradDerived>& grads) {
  if (models.cols() != w.weights().rows() || grads.rows() != models.rows() || grads.cols() != models.cols())
    throw std::invalid_argument("penalty_gradient: shape mismatch");
  return models - models * w.weights() + alpha * grads;
}

struct MetricsRow {
  std::uint64_t iteration = 0;
  double sim_time = 0.0;
  double loss = 0.0;                                        // f(x_bar)
  double gap = std::numeric_limits<double>::quiet_NaN();    // NaN without x*
  double consensus = 0.0;                                   // M_t
  double grad_norm_sq = 0.0;                                // ||grad f(x_bar)||^2
  std::uint64_t bytes = 0;

  bool operator==(const MetricsRow&) const;
};

MetricsRow measure(std::uint64_t iteration, double sim_time, const Eigen::MatrixXd& models, const Objective& obj,
                   const DataShards& data, std::uint64_t bytes);

struct TheoryConstants {
  double mu = 0.0;
  double K = 0.0;
  double gamma_sq = 0.0;
  double sigma_sq = 0.0;
  double beta = 0.0;
  double D_sq = 0.0;
  bool D_sq_is_estimate = false;
  std::size_t n = 1;
  std::size_t m = 1;
  double deadline = 1.0;
  double expected_inverse_speed = 0.0;
};

/// max{E[1/V] / T_d, 1/m} = 1 / b_eff.
double inverse_effective_batch(double expected_inverse_speed, double deadline, std::size_t m);

struct Theorem1Terms {
  double leading = 0.0;   // (D^2 (K/mu)^2 / (1-beta)^2 + sigma^2/mu) / T^delta
  double variance = 0.0;  // gamma^2/mu max{E[1/V]/T_d, 1/m} / T^{2 delta}
  double total() const { return leading + variance; }
};

/// Strongly convex envelope with every O-constant set to 1.
Theorem1Terms theorem1_terms(const TheoryConstants& c, double T, double delta);
double theorem1_bound(const TheoryConstants& c, double T, double delta);

struct Theorem2Bounds {
  double convergence = 0.0;  // average ||grad f(x_bar_t)||^2
  double consensus = 0.0;    // average M_t
};

/// Nonconvex envelopes with every O-constant set to 1.
Theorem2Bounds theorem2_bounds(const TheoryConstants& c, double T);

/// Iteration threshold above which the strongly convex rate is stated to hold
/// (max of three ceilings). Informational only; may be astronomically large.
double convex_min_iterations(const TheoryConstants& c, double delta);

/// Least-squares slope of log(value) against log(T).
double loglog_slope(std::span<const std::pair<double, double>> series);

/// Gathers the envelope constants for a problem instance. D^2 is exact for the
/// quadratic family and estimated otherwise; gamma^2 is the per-sample
/// gradient variance at the origin.
TheoryConstants estimate_theory_constants(const Objective& obj, const DataShards& data, const MixingMatrix& w,
                                          const std::optional<QuantizerSpec>& quantizer, const SpeedModel& speed,
                                          double deadline);

}  // namespace quantimed
