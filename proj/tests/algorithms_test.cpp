#include <gtest/gtest.h>

#include <cmath>

#include "quantimed/algorithms.hpp"

using namespace quantimed;

namespace {

// Owns everything a Network borrows.
struct Bench {
  Graph graph;
  MixingMatrix mixing;
  Problem problem;
  SpeedModel speed = SpeedModel::uniform(10.0, 90.0);

  Bench(Graph g, double kappa, Problem p) : graph(std::move(g)), mixing(laplacian_mixing(graph, kappa)), problem(std::move(p)) {}

  Network net(std::optional<QuantizerSpec> q = std::nullopt, std::uint64_t seed = 1, double comm = 0.0) const {
    return Network{graph, mixing, problem.objective, problem.shards, speed, q, comm, seed};
  }
};

Eigen::MatrixXd random_models(Eigen::Index p, Eigen::Index n, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd x(p, n);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = scale * rng.normal();
  return x;
}

MixingMatrix k2_half() { return MixingMatrix(Eigen::MatrixXd::Constant(2, 2, 0.5)); }

}  // namespace

TEST(StepSizes, Convex) {
  const StepSizes s = stepsizes_convex(10000, 0.4);
  EXPECT_NEAR(s.alpha, 0.15849, 1e-5);
  EXPECT_NEAR(s.eps, 0.0039811, 1e-7);
  EXPECT_NEAR(s.alpha, std::pow(10.0, -0.8), 1e-15);
  const StepSizes one = stepsizes_convex(1, 0.3);
  EXPECT_EQ(one.alpha, 1.0);
  EXPECT_EQ(one.eps, 1.0);
  EXPECT_THROW(stepsizes_convex(100, 0.5), std::invalid_argument);
  EXPECT_THROW(stepsizes_convex(100, 0.0), std::invalid_argument);
}

TEST(StepSizes, Nonconvex) {
  const StepSizes s = stepsizes_nonconvex(64);
  EXPECT_NEAR(s.alpha, 0.5, 1e-15);
  EXPECT_NEAR(s.eps, 0.125, 1e-15);
  EXPECT_EQ(stepsizes_nonconvex(1).alpha, 1.0);
  EXPECT_NEAR(stepsizes_nonconvex(1000000).alpha, 0.1, 1e-15);
  EXPECT_NEAR(stepsizes_nonconvex(1000000).eps, 0.001, 1e-15);
}

TEST(QuanTimedUpdate, HandExample) {
  Eigen::MatrixXd x(1, 2);
  x << 0.0, 2.0;
  const Eigen::MatrixXd next = quantimed_update(x, x, x, k2_half(), stepsizes_constant(1.0, 1.0));
  EXPECT_DOUBLE_EQ(next(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(next(0, 1), -1.0);
}

TEST(QuanTimedUpdate, ZeroEpsFreezes) {
  Rng rng(1);
  const Eigen::MatrixXd x = random_models(3, 2, rng), z = random_models(3, 2, rng), g = random_models(3, 2, rng);
  EXPECT_EQ(quantimed_update(x, z, g, k2_half(), stepsizes_constant(0.7, 0.0)), x);
}

TEST(QuanTimedUpdate, ConsensusFixedPoint) {
  const Bench s(build_ring(5), 2.0, make_quadratic(5, 2, 3, 1));
  const Eigen::MatrixXd x = Eigen::Vector3d(0.3, -1.0, 2.0).replicate(1, 5);
  const Eigen::MatrixXd next = quantimed_update(x, x, Eigen::MatrixXd::Zero(3, 5), s.mixing, stepsizes_constant(0.5, 0.4));
  EXPECT_LE((next - x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(QuanTimedUpdate, MeanPreservedWithoutGradients) {
  const Bench s(build_ring(6), 2.5, make_quadratic(6, 2, 4, 1));
  Rng rng(2);
  Eigen::MatrixXd x = random_models(4, 6, rng);
  const Eigen::VectorXd mean = x.rowwise().mean();
  for (int t = 0; t < 50; ++t) x = quantimed_update(x, x, Eigen::MatrixXd::Zero(4, 6), s.mixing, stepsizes_constant(1.0, 0.3));
  EXPECT_LE((x.rowwise().mean() - mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DsgdUpdate, HandExample) {
  Eigen::MatrixXd x(1, 2);
  x << 0.0, 2.0;
  const Eigen::MatrixXd next = dsgd_update(x, x, k2_half(), 0.1);
  EXPECT_DOUBLE_EQ(next(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(next(0, 1), 0.8);
}

TEST(DsgdUpdate, IdentityMixingZeroAlpha) {
  Rng rng(3);
  const Eigen::MatrixXd x = random_models(2, 3, rng);
  EXPECT_EQ(dsgd_update(x, random_models(2, 3, rng), MixingMatrix(Eigen::MatrixXd::Identity(3, 3)), 0.0), x);
}

TEST(DsgdUpdate, FullBatchConvergesOnSharedData) {
  // Every node holds the same samples, so the DSGD fixed point is x* itself.
  Eigen::MatrixXd centers(2, 8);
  for (int i = 0; i < 4; ++i) centers.block(0, 2 * i, 2, 2) << 1.0, 3.0, -2.0, 0.5;
  const Bench s(build_ring(4), 2.5, make_quadratic(4, 2, centers));
  Rng rng(4);
  Eigen::MatrixXd x = random_models(2, 4, rng, 5.0);
  for (int t = 0; t < 200; ++t) {
    Eigen::MatrixXd g(2, 4);
    for (std::size_t i = 0; i < 4; ++i) g.col(static_cast<Eigen::Index>(i)) = local_full_gradient(s.problem.objective, s.problem.shards, i, x.col(static_cast<Eigen::Index>(i)));
    x = dsgd_update(x, g, s.mixing, 0.2);
  }
  EXPECT_LT(optimality_gap(x, *s.problem.objective.optimum), 1e-6);
}

TEST(Steps, DeadlineBatchSizes) {
  Bench s(build_ring(4), 2.5, make_quadratic(4, 30, 2, 1));
  s.speed = SpeedModel::degenerate(25.0);
  const StepResult r = quantimed_step(Eigen::MatrixXd::Zero(2, 4), s.net(), stepsizes_constant(0.1, 0.5), 0.5, 0);
  for (std::size_t b : r.batch_sizes) EXPECT_EQ(b, 12u);
  EXPECT_DOUBLE_EQ(r.round_time, 0.5);
}

TEST(Steps, QdsgdMatchesQuantimedAtDeterministicSpeeds) {
  Bench s(build_ring(5), 2.5, make_logistic(5, 20, 3, 2, 0.01));
  s.speed = SpeedModel::degenerate(40.0);
  Rng rng(5);
  const Eigen::MatrixXd x = random_models(3, 5, rng);
  for (auto q : {std::optional<QuantizerSpec>{}, std::optional<QuantizerSpec>{QuantizerSpec(0.01, 12)}}) {
    const StepResult a = quantimed_step(x, s.net(q), stepsizes_constant(0.3, 0.6), 0.2, 7);
    const StepResult b = qdsgd_step(x, s.net(q), stepsizes_constant(0.3, 0.6), 8, 7);
    EXPECT_EQ(a.models, b.models);
    EXPECT_EQ(a.batch_sizes, b.batch_sizes);
  }
}

TEST(Steps, QuantizedStepIsUnbiased) {
  // Batch draws depend only on (seed, node, iteration), so the exact and the
  // quantized step see the same gradients and differ only by rounding noise.
  const Bench s(build_complete(2), 2.0, make_quadratic(2, 4, 2, 3));
  Eigen::MatrixXd x(2, 2);
  x << 0.3, -0.21, 0.77, 0.05;
  const StepSizes sizes = stepsizes_constant(0.2, 0.5);
  const int trials = 4000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 2), sq = Eigen::MatrixXd::Zero(2, 2);
  for (int k = 0; k < trials; ++k) {
    const auto t = static_cast<std::uint64_t>(k);
    const Eigen::MatrixXd d = qdsgd_step(x, s.net(QuantizerSpec(0.05, 8)), sizes, 3, t).models -
                              qdsgd_step(x, s.net(), sizes, 3, t).models;
    sum += d;
    sq += d.cwiseProduct(d);
  }
  const Eigen::MatrixXd mean = sum / trials;
  const Eigen::MatrixXd se = ((sq / trials - mean.cwiseProduct(mean)) / trials).cwiseSqrt();
  for (Eigen::Index k = 0; k < mean.size(); ++k) EXPECT_LE(std::abs(mean.data()[k]), 3.0 * se.data()[k] + 1e-15);
}

TEST(Steps, FineQuantizerApproachesExact) {
  const Bench s(build_complete(2), 2.0, make_quadratic(2, 4, 2, 3));
  Eigen::MatrixXd x(2, 2);
  x << 0.3, -0.21, 0.77, 0.05;
  const StepSizes sizes = stepsizes_constant(0.2, 0.5);
  const Eigen::MatrixXd exact = qdsgd_step(x, s.net(), sizes, 3, 0).models;
  double previous = std::numeric_limits<double>::infinity();
  for (double eta : {1e-2, 1e-3, 1e-4}) {
    const Eigen::MatrixXd q = qdsgd_step(x, s.net(QuantizerSpec(eta, 16)), sizes, 3, 0).models;
    const double err = (q - exact).cwiseAbs().maxCoeff();
    EXPECT_LE(err, 0.5 * eta);
    EXPECT_LE(err, previous);
    previous = err;
  }
}

TEST(Steps, CommTimeAndBytes) {
  Bench s(build_ring(4), 2.5, make_quadratic(4, 10, 6, 1));
  s.speed = SpeedModel::degenerate(10.0);
  const double tc = 3.0;
  const std::optional<QuantizerSpec> q16 = QuantizerSpec(0.001, 16), q4 = QuantizerSpec(0.1, 4);
  const StepResult full = quantimed_step(Eigen::MatrixXd::Zero(6, 4), s.net(q16, 1, comm_time(q16, tc)), stepsizes_constant(0.1, 0.5), 0.4, 0);
  EXPECT_DOUBLE_EQ(full.round_time, 0.4 + tc);
  EXPECT_EQ(full.bytes, 8u * 12u);  // 8 directed edges, 6 coords x 16 bits
  const StepResult quarter = quantimed_step(Eigen::MatrixXd::Zero(6, 4), s.net(q4, 1, comm_time(q4, tc)), stepsizes_constant(0.1, 0.5), 0.4, 0);
  EXPECT_DOUBLE_EQ(quarter.round_time, 0.4 + 0.75);
  EXPECT_EQ(quarter.bytes, 8u * 3u);
  const StepResult dsgd = dsgd_step(Eigen::MatrixXd::Zero(6, 4), s.net(q4, 1, tc), 0.1, 4, 0);
  EXPECT_DOUBLE_EQ(dsgd.round_time, 0.4 + tc);
  EXPECT_EQ(dsgd.bytes, 8u * 12u);
}

TEST(Steps, PenaltySgdEquivalence) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Rng grng(StreamKey{static_cast<std::uint64_t>(trial), 0, StreamPurpose::kTopology, 0});
    const Graph g = build_erdos_renyi(6, 0.5, grng);
    const Bench s(g, default_kappa(g), make_quadratic(6, 5, 3, static_cast<std::uint64_t>(trial)));
    const Eigen::MatrixXd x = random_models(3, 6, rng);
    const StepSizes sizes = stepsizes_constant(rng.uniform(0.01, 1.0), rng.uniform(0.01, 1.0));
    const StepResult r = quantimed_step(x, s.net(), sizes, 0.1, static_cast<std::uint64_t>(trial));
    const Eigen::MatrixXd expect = x - sizes.eps * penalty_gradient(s.mixing, sizes.alpha, x, r.gradients);
    EXPECT_LE((r.models - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Run, ZeroIterationsHasInitialRowOnly) {
  const Bench s(build_ring(4), 2.5, make_quadratic(4, 5, 2, 1));
  RunPlan plan;
  plan.iterations = 0;
  plan.deadline = 0.1;
  const Trace t = run(plan, s.net());
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].iteration, 0u);
  EXPECT_EQ(t.rows[0].sim_time, 0.0);
  EXPECT_EQ(t.final_models, Eigen::MatrixXd::Zero(2, 4));
}

TEST(Run, RecordCadence) {
  const Bench s(build_ring(4), 2.5, make_quadratic(4, 5, 2, 1));
  RunPlan plan;
  plan.iterations = 10;
  plan.deadline = 0.1;
  plan.record_every = 4;
  plan.sizes = stepsizes_constant(0.1, 0.5);
  const Trace t = run(plan, s.net(QuantizerSpec(0.01, 8), 1, 0.5));
  ASSERT_EQ(t.rows.size(), 4u);  // 0, 4, 8, 10
  EXPECT_EQ(t.rows[3].iteration, 10u);
  EXPECT_NEAR(t.rows[3].sim_time, 10 * 0.6, 1e-12);
  EXPECT_EQ(t.rows[1].bytes, 4u * 8u * 2u);
  EXPECT_EQ(t.rows[3].bytes, 2u * 8u * 2u);
}

TEST(Run, Deterministic) {
  const Bench s(build_ring(5), 2.5, make_logistic(5, 10, 3, 2, 0.01));
  RunPlan plan;
  plan.iterations = 30;
  plan.deadline = 0.2;
  plan.sizes = stepsizes_constant(0.3, 0.5);
  const Trace a = run(plan, s.net(QuantizerSpec(0.01, 8)));
  const Trace b = run(plan, s.net(QuantizerSpec(0.01, 8)));
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(a.final_models, b.final_models);
  const Trace c = run(plan, s.net(QuantizerSpec(0.01, 8), 2));
  EXPECT_NE(a.final_models, c.final_models);
}

TEST(Run, QuadraticRingGapShrinks) {
  const Bench s(build_ring(10), default_kappa(build_ring(10)), make_quadratic(10, 20, 2, 3));
  RunPlan plan;
  plan.iterations = 2000;
  plan.sizes = stepsizes_convex(2000, 0.4);
  plan.deadline = deadline_for_batch(8, s.speed);
  plan.record_every = 2000;
  plan.initial = Eigen::MatrixXd::Constant(2, 10, 5.0);
  const Trace t = run(plan, s.net(QuantizerSpec(2e-4, 16)));
  EXPECT_EQ(t.clamped, 0u);
  EXPECT_LT(t.rows.back().gap, t.rows.front().gap / 10.0);
}

TEST(Run, DivergenceReportsIteration) {
  const Bench s(build_ring(4), 2.5, make_quadratic(4, 5, 2, 1));
  RunPlan plan;
  plan.algorithm = Algorithm::kDsgd;
  plan.iterations = 5000;
  plan.batch = 2;
  plan.sizes = stepsizes_constant(50.0, 1.0);
  try {
    run(plan, s.net());
    FAIL() << "expected divergence";
  } catch (const std::runtime_error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("iteration ", 0), 0u) << e.what();
  }
}

TEST(Async, EqualSpeedsMatchSynchronousDsgd) {
  Bench s(build_complete(2), 2.0, make_quadratic(2, 6, 2, 4));
  s.speed = SpeedModel::degenerate(10.0);
  Rng rng(7);
  const Eigen::MatrixXd x0 = random_models(2, 2, rng);
  const std::size_t b = 5;
  Eigen::MatrixXd x = x0;
  for (std::uint64_t t = 0; t < 3; ++t) x = dsgd_step(x, s.net(), 0.2, b, t).models;

  RunPlan plan;
  plan.algorithm = Algorithm::kAsync;
  plan.batch = b;
  plan.sizes = stepsizes_constant(0.2, 1.0);
  plan.time_budget = 3 * 0.5;
  plan.async_samples = 3;
  plan.initial = x0;
  const Trace t = run(plan, s.net());
  EXPECT_EQ(t.updates, 6u);
  EXPECT_EQ(t.final_models, x);
}

TEST(Async, SingleNodeIsPlainSgd) {
  Bench s(Graph(1, {}), 1.0, make_quadratic(1, 8, 3, 5));
  s.speed = SpeedModel::degenerate(4.0);
  RunPlan plan;
  plan.algorithm = Algorithm::kAsync;
  plan.batch = 2;
  plan.sizes = stepsizes_constant(0.3, 1.0);
  plan.time_budget = 5.0;
  plan.async_samples = 10;
  const Trace t = run(plan, s.net());
  EXPECT_EQ(t.updates, 10u);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  for (std::uint64_t k = 0; k < 10; ++k) {
    Rng brng(StreamKey{1, 0, StreamPurpose::kBatch, k});
    const auto batch = draw_batch(8, 2, brng);
    x -= 0.3 * deadline_stochastic_gradient(s.problem.objective, s.problem.shards, 0, x, batch).gradient;
  }
  EXPECT_LE((t.final_models.col(0) - x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Async, StaleReadHandTrace) {
  // Speeds 10 and 5 with b = 10: node 0 fires at 1 and 2, node 1 at 2.
  // m = 1 makes every gradient deterministic: g_i = x_i - c_i.
  Eigen::MatrixXd centers(1, 2);
  centers << 1.0, -2.0;
  Bench s(build_complete(2), 2.0, make_quadratic(2, 1, centers));
  Network net = s.net();
  net.node_speeds = {SpeedModel::degenerate(10.0), SpeedModel::degenerate(5.0)};
  const double a = 0.4, b0 = 3.0, alpha = 0.1;
  RunPlan plan;
  plan.algorithm = Algorithm::kAsync;
  plan.batch = 10;
  plan.sizes = stepsizes_constant(alpha, 1.0);
  plan.time_budget = 2.0;
  plan.async_samples = 2;
  plan.initial = Eigen::MatrixXd(1, 2);
  (*plan.initial) << a, b0;
  const Trace t = run(plan, net);
  ASSERT_EQ(t.updates, 3u);

  const double a1 = 0.5 * a + 0.5 * b0 - alpha * (a - 1.0);
  const double a2 = 0.5 * a1 + 0.5 * b0 - alpha * (a1 - 1.0);  // node 1's t=2 model is not yet visible
  const double b1 = 0.5 * b0 + 0.5 * a1 - alpha * (b0 + 2.0);  // node 0's t=2 model is not yet visible
  EXPECT_DOUBLE_EQ(t.final_models(0, 0), a2);
  EXPECT_DOUBLE_EQ(t.final_models(0, 1), b1);
  // Grid rows at 0, 1, 2 see 0, 1 and 3 completed updates.
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[1].sim_time, 1.0);
}

TEST(Async, GridRowsAndBytes) {
  Bench s(build_ring(5), 2.5, make_quadratic(5, 10, 2, 2));
  RunPlan plan;
  plan.algorithm = Algorithm::kAsync;
  plan.batch = 4;
  plan.sizes = stepsizes_constant(0.1, 1.0);
  plan.time_budget = 10.0;
  plan.async_samples = 20;
  const Trace t = run(plan, s.net(std::nullopt, 1, 0.2));
  ASSERT_EQ(t.rows.size(), 21u);
  std::uint64_t bytes = 0;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    EXPECT_NEAR(t.rows[k].sim_time, 0.5 * static_cast<double>(k), 1e-12);
    bytes += t.rows[k].bytes;
  }
  EXPECT_EQ(bytes, t.updates * 2u * 4u);  // degree 2, two 16-bit coordinates
}
