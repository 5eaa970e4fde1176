#include "quantimed/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace quantimed {

namespace {

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

double require_mu(const TheoryConstants& c) {
  if (!(c.mu > 0.0)) throw std::invalid_argument("theorem1: strong convexity constant mu must be positive");
  return c.mu;
}

}  // namespace

bool MetricsRow::operator==(const MetricsRow& o) const {
  return iteration == o.iteration && same(sim_time, o.sim_time) && same(loss, o.loss) && same(gap, o.gap) &&
         same(consensus, o.consensus) && same(grad_norm_sq, o.grad_norm_sq) && bytes == o.bytes;
}

double optimality_gap(const Eigen::MatrixXd& models, const Objective& obj) {
  if (!obj.optimum)
    throw std::invalid_argument(std::string("optimality_gap: no optimum for the ") + to_string(obj.family) +
                                " family");
  return optimality_gap(models, *obj.optimum);
}

MetricsRow measure(std::uint64_t iteration, double sim_time, const Eigen::MatrixXd& models, const Objective& obj,
                   const DataShards& data, std::uint64_t bytes) {
  MetricsRow row;
  row.iteration = iteration;
  row.sim_time = sim_time;
  const Eigen::VectorXd mean = models.rowwise().mean();
  row.loss = global_loss(obj, data, mean);
  if (obj.optimum) row.gap = optimality_gap(models, *obj.optimum);
  row.consensus = consensus_error(models);
  row.grad_norm_sq = global_gradient(obj, data, mean).squaredNorm();
  row.bytes = bytes;
  return row;
}

double inverse_effective_batch(double expected_inverse_speed, double deadline, std::size_t m) {
  if (!(deadline > 0.0)) throw std::invalid_argument("inverse_effective_batch: deadline must be positive");
  return std::max(expected_inverse_speed / deadline, 1.0 / static_cast<double>(m));
}

Theorem1Terms theorem1_terms(const TheoryConstants& c, double T, double delta) {
  if (!(T >= 1.0)) throw std::invalid_argument("theorem1_bound: T must be >= 1");
  const double mu = require_mu(c);
  const double gap = 1.0 - c.beta;
  const double cond = c.K / mu;
  Theorem1Terms terms;
  terms.leading = (c.D_sq * cond * cond / (gap * gap) + c.sigma_sq / mu) / std::pow(T, delta);
  terms.variance = (c.gamma_sq / mu) * inverse_effective_batch(c.expected_inverse_speed, c.deadline, c.m) /
                   std::pow(T, 2.0 * delta);
  return terms;
}

double theorem1_bound(const TheoryConstants& c, double T, double delta) { return theorem1_terms(c, T, delta).total(); }

Theorem2Bounds theorem2_bounds(const TheoryConstants& c, double T) {
  if (!(T >= 1.0)) throw std::invalid_argument("theorem2_bounds: T must be >= 1");
  const double gap = 1.0 - c.beta;
  const double n = static_cast<double>(c.n);
  const double m = static_cast<double>(c.m);
  const double inv_beff = inverse_effective_batch(c.expected_inverse_speed, c.deadline, c.m);
  Theorem2Bounds out;
  out.convergence = (c.K * c.K / (gap * gap) * c.gamma_sq / m + c.K * c.sigma_sq / n) / std::cbrt(T) +
                    (c.K * c.gamma_sq / n * inv_beff) / std::pow(T, 2.0 / 3.0);
  out.consensus = c.gamma_sq / (m * gap * gap) / std::cbrt(T);
  return out;
}

double convex_min_iterations(const TheoryConstants& c, double delta) {
  const double mu = require_mu(c);
  const double a = std::ceil(std::pow((2.0 + c.K) * (2.0 + c.K) / mu, 1.0 / delta));
  const double b = std::ceil(std::exp(std::exp(1.0 / (1.0 - 2.0 * delta))));
  const double d = std::ceil(std::pow(mu, 1.0 / (2.0 * delta)));
  return std::max({a, b, d});
}

double loglog_slope(std::span<const std::pair<double, double>> series) {
  if (series.size() < 2) throw std::invalid_argument("loglog_slope: need at least two points");
  double sx = 0.0, sy = 0.0;
  for (const auto& [t, v] : series) {
    if (!(t > 0.0) || !(v > 0.0)) throw std::invalid_argument("loglog_slope: values must be positive");
    sx += std::log(t);
    sy += std::log(v);
  }
  const double k = static_cast<double>(series.size());
  const double mx = sx / k;
  const double my = sy / k;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [t, v] : series) {
    const double dx = std::log(t) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(v) - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("loglog_slope: T values must not all coincide");
  return sxy / sxx;
}

TheoryConstants estimate_theory_constants(const Objective& obj, const DataShards& data, const MixingMatrix& w,
                                          const std::optional<QuantizerSpec>& quantizer, const SpeedModel& speed,
                                          double deadline) {
  TheoryConstants c;
  c.mu = obj.strong_convexity.value_or(0.0);
  c.K = obj.smoothness;
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obj.dimension));
  c.gamma_sq = gradient_variance(obj, data, origin);
  c.sigma_sq = quantizer ? variance_bound(*quantizer, obj.dimension) : 0.0;
  c.beta = w.beta();
  double sum = 0.0;
  for (std::size_t i = 0; i < data.node_count(); ++i)
    sum += local_loss(obj, data, i, origin) - local_minimum_value(obj, data, i);
  c.D_sq = 2.0 * c.K * sum;
  c.D_sq_is_estimate = obj.family != ObjectiveFamily::kQuadratic;
  c.n = data.node_count();
  c.m = data.samples_per_node();
  c.deadline = deadline;
  c.expected_inverse_speed = expected_inverse_speed(speed);
  return c;
}

}  // namespace quantimed
