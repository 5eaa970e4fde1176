#include "quantimed/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cstdio>
#include <exception>
#include <thread>

#include "quantimed/metrics.hpp"

namespace quantimed {

namespace {

Graph build_graph(const ExperimentConfig& c) {
  if (c.topology == "ring") return build_ring(c.n);
  if (c.topology == "path") return build_path(c.n);
  if (c.topology == "complete") return build_complete(c.n);
  if (c.n == 1) return Graph(1, {});
  Rng rng(StreamKey{c.topology_seed.value_or(c.seed), 0, StreamPurpose::kTopology, 0});
  return build_erdos_renyi(c.n, c.p_c, rng);
}

double resolve_kappa(const ExperimentConfig& c, const Graph& g) {
  if (c.kappa) return *c.kappa;
  if (g.size() == 1) return 1.0;
  return default_kappa(g, c.margin);
}

Problem build_problem(const ExperimentConfig& c) {
  const std::uint64_t seed = c.data_seed.value_or(c.seed);
  switch (c.family) {
    case ObjectiveFamily::kQuadratic: return make_quadratic(c.n, c.m, c.p, seed, c.center_scale);
    case ObjectiveFamily::kLogistic:
      if (!c.csv.empty()) return make_logistic_csv(c.csv, c.n, c.m, c.ridge);
      return make_logistic(c.n, c.m, c.p, seed, c.ridge);
    case ObjectiveFamily::kMlp: return make_mlp(c.n, c.m, c.p, c.hidden, seed);
  }
  throw std::logic_error("unhandled objective family");
}

SpeedModel build_speed(const ExperimentConfig& c) {
  if (c.speed == "degenerate") return SpeedModel::degenerate(c.speed_value);
  return SpeedModel::uniform(c.speed_lo, c.speed_hi);
}

std::optional<QuantizerSpec> build_quantizer(const ExperimentConfig& c) {
  if (!c.bits) return std::nullopt;
  return QuantizerSpec(*c.eta, *c.bits, c.lo);
}

StepSizes resolve_steps(const ExperimentConfig& c) {
  const std::uint64_t T = std::max<std::uint64_t>(c.iterations.value_or(1), 1);
  StepSizes s;
  switch (c.schedule) {
    case Schedule::kConvex: s = stepsizes_convex(T, *c.delta); break;
    case Schedule::kNonconvex: s = stepsizes_nonconvex(T); break;
    case Schedule::kConstant: s = stepsizes_constant(*c.alpha, c.eps.value_or(1.0)); break;
  }
  s.alpha *= c.alpha_scale;
  s.eps *= c.eps_scale;
  if (s.eps > 1.0) throw ConfigError(0, "resolved eps = " + std::to_string(s.eps) + " exceeds 1; lower step.eps_scale");
  return s;
}

// Lets the Experiment constructor surface resolution failures as ConfigError
// where they stem from configuration values.
template <typename F>
auto as_config_error(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, std::string(what) + ": " + e.what());
  }
}

ExperimentConfig validated(ExperimentConfig c) {
  validate(c);
  return c;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

}  // namespace

Experiment::Experiment(ExperimentConfig config)
    : config_(validated(std::move(config))),
      graph_(as_config_error("topology", [&] { return build_graph(config_); })),
      kappa_(resolve_kappa(config_, graph_)),
      mixing_(as_config_error("topology", [&] { return laplacian_mixing(graph_, kappa_); })),
      problem_(as_config_error("objective", [&] { return build_problem(config_); })),
      speed_(as_config_error("speed", [&] { return build_speed(config_); })),
      quantizer_(as_config_error("quantizer", [&] { return build_quantizer(config_); })) {
  const ExperimentConfig& c = config_;
  plan_.algorithm = c.algo;
  plan_.iterations = c.iterations.value_or(0);
  plan_.sizes = resolve_steps(c);
  plan_.batch = static_cast<std::size_t>(c.batch.value_or(1.0));
  plan_.deadline = c.deadline ? *c.deadline : deadline_for_batch(c.batch.value_or(1.0), speed_);
  plan_.record_every = c.record_every;
  plan_.time_budget = c.time_budget.value_or(0.0);
  plan_.async_samples = c.async_samples;
  if (c.init == "gaussian") {
    const auto p = static_cast<Eigen::Index>(problem_.objective.dimension);
    Eigen::MatrixXd init(p, static_cast<Eigen::Index>(c.n));
    for (Eigen::Index i = 0; i < init.cols(); ++i) {
      Rng rng(StreamKey{c.seed, static_cast<std::uint64_t>(i), StreamPurpose::kInit, 0});
      for (Eigen::Index k = 0; k < p; ++k) init(k, i) = c.init_scale * rng.normal();
    }
    plan_.initial = std::move(init);
  }

  std::size_t max_degree = 0;
  for (std::size_t i = 0; i < graph_.size(); ++i) max_degree = std::max(max_degree, graph_.degree(i));
  derived_.kappa = kappa_;
  derived_.beta = mixing_.beta();
  derived_.deadline = plan_.deadline;
  derived_.alpha = plan_.sizes.alpha;
  derived_.eps = plan_.sizes.eps;
  derived_.expected_inverse_speed = expected_inverse_speed(speed_);
  derived_.effective_batch = c.algo == Algorithm::kQuanTimed ? effective_batch(plan_.deadline, speed_, c.m)
                                                             : static_cast<double>(plan_.batch);
  derived_.comm_seconds =
      comm_time(quantizer_, c.tc) * (c.per_degree_comm ? static_cast<double>(max_degree) : 1.0);
  derived_.dimension = problem_.objective.dimension;
  derived_.edges = graph_.edges().size();
}

Network Experiment::network() const {
  return Network{graph_,    mixing_,    problem_.objective, problem_.shards, speed_,
                 quantizer_, derived_.comm_seconds, config_.seed};
}

bool RunRecord::operator==(const RunRecord& o) const { return same_result(*this, o) && wall_seconds == o.wall_seconds; }

bool same_result(const RunRecord& a, const RunRecord& b) {
  return a.config_text == b.config_text && a.objective_note == b.objective_note && a.derived == b.derived &&
         a.rows == b.rows && a.final_models.rows() == b.final_models.rows() &&
         a.final_models.cols() == b.final_models.cols() && a.final_models == b.final_models &&
         a.models_digest == b.models_digest && a.clamped == b.clamped && a.updates == b.updates;
}

std::string models_digest(const Eigen::MatrixXd& models) {
  std::uint64_t h = kFnvOffset;
  for (Eigen::Index k = 0; k < models.size(); ++k) {
    const auto bits = std::bit_cast<std::uint64_t>(models.data()[k]);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= kFnvPrime;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunRecord run_experiment(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const Experiment exp(config);
  Trace trace = run(exp.plan(), exp.network());
  RunRecord record;
  record.config_text = to_text(exp.config());
  record.objective_note = std::string("synthetic stand-in ") + to_string(exp.problem().objective.family) +
                          " loss; data " + exp.problem().shards.source +
                          (exp.problem().objective.smoothness_is_estimate ? "; K estimated" : "") +
                          (exp.problem().objective.optimum_is_numeric ? "; x* numeric" : "");
  record.derived = exp.derived();
  record.rows = std::move(trace.rows);
  record.models_digest = models_digest(trace.final_models);
  record.final_models = std::move(trace.final_models);
  record.clamped = trace.clamped;
  record.updates = trace.updates;
  record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

std::vector<RunRecord> sweep(const std::vector<ExperimentConfig>& configs, std::size_t jobs) {
  std::vector<RunRecord> records(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  auto work = [&](std::size_t k) {
    try {
      records[k] = run_experiment(configs[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (jobs <= 1 || configs.size() <= 1) {
    for (std::size_t k = 0; k < configs.size(); ++k) work(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(jobs, configs.size()); ++t) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < configs.size(); k = next++) work(k);
      });
    }
  }
  for (std::size_t k = 0; k < configs.size(); ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const ConfigError& e) {
      throw ConfigError(e.line(), "config #" + std::to_string(k) + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error("config #" + std::to_string(k) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace quantimed
