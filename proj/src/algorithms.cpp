#include "quantimed/algorithms.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace quantimed {

namespace {

Eigen::MatrixXd initial_models(const RunPlan& plan, const Network& net) {
  const auto p = static_cast<Eigen::Index>(net.objective.dimension);
  const auto n = static_cast<Eigen::Index>(net.graph.size());
  if (!plan.initial) return Eigen::MatrixXd::Zero(p, n);
  if (plan.initial->rows() != p || plan.initial->cols() != n)
    throw std::invalid_argument("run: initial models must be p x n");
  return *plan.initial;
}

std::uint64_t message_bytes(const Network& net) {
  const std::size_t p = net.objective.dimension;
  const std::uint64_t bits = net.quantizer ? message_bits(*net.quantizer, p) : unquantized_message_bits(p);
  return (bits + 7) / 8;
}

std::uint64_t directed_edges(const Graph& g) { return 2 * static_cast<std::uint64_t>(g.edges().size()); }

void check_network(const Network& net) {
  if (net.mixing.size() != net.graph.size() || net.data.node_count() != net.graph.size())
    throw std::invalid_argument("network: graph, mixing matrix and data disagree on n");
}

std::string with_context(std::uint64_t iteration, const std::exception& e) {
  return "iteration " + std::to_string(iteration) + ": " + e.what();
}

}  // namespace

const char* to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::kQuanTimed: return "quantimed";
    case Algorithm::kDsgd: return "dsgd";
    case Algorithm::kQdsgd: return "qdsgd";
    case Algorithm::kAsync: return "async";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "quantimed") return Algorithm::kQuanTimed;
  if (name == "dsgd") return Algorithm::kDsgd;
  if (name == "qdsgd") return Algorithm::kQdsgd;
  if (name == "async") return Algorithm::kAsync;
  throw std::invalid_argument("unknown algorithm '" + name + "'");
}

const char* to_string(Schedule schedule) {
  switch (schedule) {
    case Schedule::kConvex: return "convex";
    case Schedule::kNonconvex: return "nonconvex";
    case Schedule::kConstant: return "constant";
  }
  return "unknown";
}

StepSizes stepsizes_convex(std::uint64_t T, double delta) {
  if (T < 1) throw std::invalid_argument("stepsizes_convex: T must be >= 1");
  if (!(delta > 0.0 && delta < 0.5)) throw std::invalid_argument("stepsizes_convex: delta must lie in (0, 1/2)");
  const double t = static_cast<double>(T);
  return {std::pow(t, -delta / 2.0), std::pow(t, -1.5 * delta), Schedule::kConvex};
}

StepSizes stepsizes_nonconvex(std::uint64_t T) {
  if (T < 1) throw std::invalid_argument("stepsizes_nonconvex: T must be >= 1");
  const double t = static_cast<double>(T);
  return {std::pow(t, -1.0 / 6.0), 1.0 / std::sqrt(t), Schedule::kNonconvex};
}

StepSizes stepsizes_constant(double alpha, double eps) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("stepsizes_constant: alpha must be >= 0");
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("stepsizes_constant: eps must lie in [0, 1]");
  return {alpha, eps, Schedule::kConstant};
}

Exchange exchange_models(const Eigen::MatrixXd& models, const Network& net, std::uint64_t iteration) {
  Exchange ex;
  ex.bytes = directed_edges(net.graph) * message_bytes(net);
  if (!net.quantizer) {
    ex.messages = models;
    return ex;
  }
  ex.messages.resize(models.rows(), models.cols());
  for (Eigen::Index i = 0; i < models.cols(); ++i) {
    Rng rng(StreamKey{net.seed, static_cast<std::uint64_t>(i), StreamPurpose::kQuantize, iteration});
    const QuantizedVector q = quantize(models.col(i), *net.quantizer, rng);
    ex.clamped += q.clamped;
    ex.messages.col(i) = dequantize(q);
  }
  return ex;
}

const SpeedModel& speed_of(const Network& net, std::size_t node) {
  if (net.node_speeds.empty()) return net.speed;
  if (net.node_speeds.size() != net.graph.size()) throw std::invalid_argument("node_speeds: one model per node required");
  return net.node_speeds[node];
}

namespace {

template <typename BatchRule>
LocalGradients local_gradients(const Eigen::MatrixXd& models, const Network& net, std::uint64_t iteration,
                               BatchRule batch_rule) {
  const std::size_t n = net.graph.size();
  const std::size_t m = net.data.samples_per_node();
  LocalGradients out;
  out.gradients.resize(models.rows(), models.cols());
  out.batch_sizes.resize(n);
  out.speeds.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng speed_rng(StreamKey{net.seed, i, StreamPurpose::kSpeed, iteration});
    out.speeds[i] = draw_speed(speed_of(net, i), speed_rng);
    const std::size_t size = batch_rule(out.speeds[i], m);
    Rng batch_rng(StreamKey{net.seed, i, StreamPurpose::kBatch, iteration});
    const std::vector<std::size_t> batch = draw_batch(m, size, batch_rng);
    const auto col = static_cast<Eigen::Index>(i);
    GradSample g = deadline_stochastic_gradient(net.objective, net.data, i, models.col(col), batch, iteration);
    out.gradients.col(col) = g.gradient;
    out.batch_sizes[i] = size;
  }
  return out;
}

}  // namespace

LocalGradients deadline_gradients(const Eigen::MatrixXd& models, const Network& net, double deadline,
                                  std::uint64_t iteration) {
  return local_gradients(models, net, iteration, [deadline](double v, std::size_t m) {
    return batch_size_for_deadline(v, deadline, m);
  });
}

LocalGradients fixed_batch_gradients(const Eigen::MatrixXd& models, const Network& net, std::size_t batch,
                                     std::uint64_t iteration) {
  return local_gradients(models, net, iteration, [batch](double, std::size_t) { return batch; });
}

Eigen::MatrixXd quantimed_update(const Eigen::MatrixXd& models, const Eigen::MatrixXd& messages,
                                 const Eigen::MatrixXd& gradients, const MixingMatrix& w, const StepSizes& sizes) {
  const Eigen::Index n = models.cols();
  const double eps = sizes.eps;
  Eigen::MatrixXd next(models.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd neighbor_sum = Eigen::VectorXd::Zero(models.rows());
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i && w.weights()(i, j) != 0.0) neighbor_sum += w.weights()(i, j) * messages.col(j);
    }
    next.col(i) = (1.0 - eps + eps * w.weights()(i, i)) * models.col(i) + eps * neighbor_sum -
                  sizes.alpha * eps * gradients.col(i);
  }
  return next;
}

Eigen::MatrixXd dsgd_update(const Eigen::MatrixXd& models, const Eigen::MatrixXd& gradients, const MixingMatrix& w,
                            double alpha) {
  const Eigen::Index n = models.cols();
  Eigen::MatrixXd next(models.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Self term first, then neighbors by index: the async engine sums in the same order.
    Eigen::VectorXd mix = w.weights()(i, i) * models.col(i);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i && w.weights()(i, j) != 0.0) mix += w.weights()(i, j) * models.col(j);
    }
    next.col(i) = mix - alpha * gradients.col(i);
  }
  return next;
}

StepResult quantimed_step(const Eigen::MatrixXd& models, const Network& net, const StepSizes& sizes, double deadline,
                          std::uint64_t iteration) {
  Exchange ex = exchange_models(models, net, iteration);
  LocalGradients grads = deadline_gradients(models, net, deadline, iteration);
  StepResult out;
  out.models = quantimed_update(models, ex.messages, grads.gradients, net.mixing, sizes);
  out.round_time = sync_compute_time(SyncMode::kDeadline, deadline, grads.speeds) + net.comm_seconds;
  out.bytes = ex.bytes;
  out.clamped = ex.clamped;
  out.messages = std::move(ex.messages);
  out.gradients = std::move(grads.gradients);
  out.batch_sizes = std::move(grads.batch_sizes);
  return out;
}

StepResult qdsgd_step(const Eigen::MatrixXd& models, const Network& net, const StepSizes& sizes, std::size_t batch,
                      std::uint64_t iteration) {
  Exchange ex = exchange_models(models, net, iteration);
  LocalGradients grads = fixed_batch_gradients(models, net, batch, iteration);
  StepResult out;
  out.models = quantimed_update(models, ex.messages, grads.gradients, net.mixing, sizes);
  out.round_time =
      sync_compute_time(SyncMode::kFixedBatch, static_cast<double>(batch), grads.speeds) + net.comm_seconds;
  out.bytes = ex.bytes;
  out.clamped = ex.clamped;
  out.messages = std::move(ex.messages);
  out.gradients = std::move(grads.gradients);
  out.batch_sizes = std::move(grads.batch_sizes);
  return out;
}

StepResult dsgd_step(const Eigen::MatrixXd& models, const Network& net, double alpha, std::size_t batch,
                     std::uint64_t iteration) {
  LocalGradients grads = fixed_batch_gradients(models, net, batch, iteration);
  StepResult out;
  out.models = dsgd_update(models, grads.gradients, net.mixing, alpha);
  out.round_time =
      sync_compute_time(SyncMode::kFixedBatch, static_cast<double>(batch), grads.speeds) + net.comm_seconds;
  out.bytes = directed_edges(net.graph) * ((unquantized_message_bits(net.objective.dimension) + 7) / 8);
  out.messages = models;
  out.gradients = std::move(grads.gradients);
  out.batch_sizes = std::move(grads.batch_sizes);
  return out;
}

Trace run(const RunPlan& plan, const Network& net) {
  check_network(net);
  if (plan.algorithm == Algorithm::kAsync) return async_dsgd_run(plan, net);
  if (plan.record_every == 0) throw std::invalid_argument("run: record_every must be >= 1");

  Trace trace;
  Eigen::MatrixXd models = initial_models(plan, net);
  SimClock clock;
  trace.rows.push_back(measure(0, clock.now(), models, net.objective, net.data, 0));
  std::uint64_t pending_bytes = 0;
  for (std::uint64_t t = 0; t < plan.iterations; ++t) {
    StepResult step;
    try {
      switch (plan.algorithm) {
        case Algorithm::kQuanTimed: step = quantimed_step(models, net, plan.sizes, plan.deadline, t); break;
        case Algorithm::kQdsgd: step = qdsgd_step(models, net, plan.sizes, plan.batch, t); break;
        case Algorithm::kDsgd: step = dsgd_step(models, net, plan.sizes.alpha, plan.batch, t); break;
        case Algorithm::kAsync: break;
      }
      if (!step.models.allFinite()) throw std::runtime_error("model diverged to a non-finite value");
    } catch (const std::exception& e) {
      throw std::runtime_error(with_context(t, e));
    }
    models = std::move(step.models);
    clock.advance(step.round_time);
    trace.clamped += step.clamped;
    pending_bytes += step.bytes;
    const std::uint64_t done = t + 1;
    if (done % plan.record_every == 0 || done == plan.iterations) {
      trace.rows.push_back(measure(done, clock.now(), models, net.objective, net.data, pending_bytes));
      pending_bytes = 0;
    }
  }
  trace.updates = plan.iterations;
  trace.final_models = std::move(models);
  return trace;
}

Trace async_dsgd_run(const RunPlan& plan, const Network& net) {
  check_network(net);
  if (!(plan.time_budget >= 0.0)) throw std::invalid_argument("async_dsgd_run: time budget must be >= 0");
  if (plan.async_samples == 0) throw std::invalid_argument("async_dsgd_run: need at least one sample point");
  const std::size_t n = net.graph.size();
  const Eigen::MatrixXd& w = net.mixing.weights();

  Eigen::MatrixXd models = initial_models(plan, net);
  // Two-slot mailbox per node: the newest published model and the one before.
  struct Mailbox {
    Eigen::VectorXd current;
    double published_at = 0.0;
    Eigen::VectorXd previous;
  };
  std::vector<Mailbox> mailbox(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    mailbox[i] = {models.col(col), -1.0, models.col(col)};
  }

  // Each update costs b / V of compute plus one message exchange.
  std::vector<SpeedModel> speeds;
  for (std::size_t i = 0; i < n; ++i) speeds.push_back(speed_of(net, i));
  AsyncSchedule schedule(std::move(speeds), static_cast<double>(plan.batch), net.seed, net.comm_seconds);
  const std::uint64_t bytes_per_message = message_bytes(net);

  Trace trace;
  const double grid_step = plan.time_budget / static_cast<double>(plan.async_samples);
  std::size_t next_sample = 0;
  std::uint64_t pending_bytes = 0;
  // A grid row at time g reflects every update completed at or before g.
  auto record_before = [&](double time_limit) {
    while (next_sample <= plan.async_samples) {
      const double g = grid_step * static_cast<double>(next_sample);
      if (g >= time_limit) break;
      trace.rows.push_back(measure(next_sample, g, models, net.objective, net.data, pending_bytes));
      pending_bytes = 0;
      ++next_sample;
    }
  };

  const std::size_t m = net.data.samples_per_node();
  while (schedule.peek().time <= plan.time_budget) {
    const AsyncEvent ev = schedule.next();
    const double t = ev.time;
    const std::size_t fire = ev.node;
    record_before(t);
    const auto col = static_cast<Eigen::Index>(fire);
    const std::uint64_t k = ev.update;

    Eigen::VectorXd mix = w(col, col) * models.col(col);
    for (std::size_t j : net.graph.neighbors(fire)) {
      const Mailbox& box = mailbox[j];
      const Eigen::VectorXd& seen = box.published_at < t ? box.current : box.previous;
      mix += w(col, static_cast<Eigen::Index>(j)) * seen;
    }
    Rng batch_rng(StreamKey{net.seed, fire, StreamPurpose::kBatch, k});
    const std::vector<std::size_t> batch = draw_batch(m, plan.batch, batch_rng);
    const GradSample g = deadline_stochastic_gradient(net.objective, net.data, fire, models.col(col), batch, k);
    models.col(col) = mix - plan.sizes.alpha * g.gradient;
    if (!models.col(col).allFinite())
      throw std::runtime_error(with_context(trace.updates, std::runtime_error("model diverged to a non-finite value")));

    Mailbox& own = mailbox[fire];
    own.previous = std::move(own.current);
    if (net.quantizer) {
      Rng qrng(StreamKey{net.seed, fire, StreamPurpose::kQuantize, k});
      const QuantizedVector q = quantize(models.col(col), *net.quantizer, qrng);
      trace.clamped += q.clamped;
      own.current = dequantize(q);
    } else {
      own.current = models.col(col);
    }
    own.published_at = t;
    pending_bytes += bytes_per_message * net.graph.degree(fire);
    ++trace.updates;
  }
  record_before(std::numeric_limits<double>::infinity());
  trace.final_models = std::move(models);
  return trace;
}

}  // namespace quantimed
