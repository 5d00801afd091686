#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "parseq/analysis.hpp"
#include "parseq/oracle.hpp"
#include "parseq/solvers.hpp"
#include "parseq/systems.hpp"
#include "test_models.hpp"

using namespace parseq;
using parseq::testing::DiagonalTanh;
using parseq::testing::ScalarAffine;

namespace {

double max_error(const Trajectory& a, const Trajectory& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.states().data().size(); ++i)
    m = std::max(m, std::abs(a.states().data()[i] - b.states().data()[i]));
  return m;
}

SolverConfig sequential_cfg(std::uint64_t seed = 0) {
  SolverConfig c;
  c.seed = seed;
  c.scan.mode = ScanMode::sequential;
  return c;
}

void expect_report_invariants(const SolverReport& r, double tol) {
  EXPECT_EQ(r.merit_history.size(), r.iterations + 1);
  EXPECT_EQ(r.converged, r.merit_history.back() <= tol);
  EXPECT_GE(r.wall_seconds, 0.0);
}

}  // namespace

TEST(Deer, OracleMatchContractiveRnn) {
  const auto model = mean_field_rnn(20, 0.8, 1000, 0);
  const Vec s0 = random_initial_state(20, 0);
  const auto truth = sequential_rollout(model, s0, 1000);
  for (auto mode : {ScanMode::sequential, ScanMode::parallel}) {
    SolverConfig c;
    c.scan = {mode, 4, 0};
    const auto rep = deer_solve(model, s0, c);
    expect_report_invariants(rep, c.tol);
    EXPECT_TRUE(rep.converged);
    EXPECT_LE(rep.iterations, 15u);
    EXPECT_LE(max_error(rep.final, truth), 1e-6);
  }
}

TEST(Deer, GoldenMeritHistory) {
  const auto model = mean_field_rnn(20, 0.8, 1000, 0);
  const auto rep = deer_solve(model, random_initial_state(20, 0), sequential_cfg());
  const std::vector<double> golden{5992.700531268428, 181.8848653546866, 0.5005276319629498,
                                   2.983335096253263e-05, 1.328945815960747e-12};
  ASSERT_EQ(rep.iterations, 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(rep.merit_history[i], golden[i], 1e-9 * golden[i]);
  EXPECT_LT(rep.merit_history[4], 1e-10);
}

TEST(Deer, LinearSystemsConvergeInOneStep) {
  for (auto mode : {ScanMode::sequential, ScanMode::parallel}) {
    const auto res = linear_one_step_suite(20, 3, {mode, 8, 0});
    EXPECT_EQ(res.passed, 20u) << "worst margin " << res.worst_margin;
  }
}

TEST(Deer, LinearAnyInit) {
  const auto model = random_linear_system(4, 300, 9, 1.02);
  for (auto init : {InitKind::zeros, InitKind::uniform01, InitKind::std_normal}) {
    SolverConfig c;
    c.init = init;
    c.tol = 1e-12;
    const auto rep = deer_solve(model, random_initial_state(4, 9), c);
    EXPECT_EQ(rep.iterations, 1u);
    EXPECT_LE(rep.merit_history.back(), 1e-12);
  }
}

TEST(Deer, StartingAtTruthNeedsNoIterations) {
  const auto model = mean_field_rnn(6, 1.1, 80, 2);
  const Vec s0 = random_initial_state(6, 2);
  const auto truth = sequential_rollout(model, s0, 80);
  for (auto kind : {SolverKind::deer, SolverKind::quasi_deer, SolverKind::gd}) {
    SolverConfig c;
    c.init = InitKind::given;
    c.initial = truth.states();
    const auto rep = solve(kind, model, s0, c);
    EXPECT_EQ(rep.iterations, 0u);
    EXPECT_TRUE(rep.converged);
    EXPECT_EQ(rep.merit_history.size(), 1u);
  }
}

TEST(Deer, IterationCapOnChaoticSystem) {
  const auto model = mean_field_rnn(30, 2.5, 400, 0);
  SolverConfig c = sequential_cfg();
  c.max_iters = 5;
  const auto rep = deer_solve(model, random_initial_state(30, 0), c);
  EXPECT_EQ(rep.iterations, 5u);
  EXPECT_FALSE(rep.converged);
  expect_report_invariants(rep, c.tol);
}

TEST(Deer, DefaultCapIsHorizon) {
  const auto model = mean_field_rnn(30, 2.5, 60, 1);
  SolverConfig c = sequential_cfg();
  c.tol = 1e-300;
  const auto rep = deer_solve(model, random_initial_state(30, 1), c);
  EXPECT_LE(rep.iterations, 60u);
  // DEER is exact after at most T steps.
  EXPECT_LE(max_error(rep.final, sequential_rollout(model, random_initial_state(30, 1), 60)), 1e-6);
}

TEST(Deer, WorkersDoNotChangeResult) {
  const auto model = mean_field_rnn(10, 1.0, 500, 4);
  SolverConfig a = sequential_cfg(), b = sequential_cfg();
  b.workers = 4;
  const auto ra = deer_solve(model, random_initial_state(10, 4), a);
  const auto rb = deer_solve(model, random_initial_state(10, 4), b);
  EXPECT_EQ(ra.final, rb.final);
  EXPECT_EQ(ra.merit_history, rb.merit_history);
}

// Merit <= tol only bounds ||r|| by sqrt(2 tol), so the trajectory check runs
// at a tolerance where that bound is below the 1e-5 target.
TEST(Deer, ContractiveSolutionsMatchRollout) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double g = 0.3 + 0.06 * static_cast<double>(seed);
    const auto model = mean_field_rnn(8, g, 300, seed);
    const Vec s0 = random_initial_state(8, seed);
    const auto truth = sequential_rollout(model, s0, 300);
    ASSERT_LT(trajectory_lle(model, truth), 0.0);
    for (auto kind : {SolverKind::deer, SolverKind::quasi_deer}) {
      SolverConfig c = sequential_cfg(seed);
      c.tol = 1e-12;
      const auto rep = solve(kind, model, s0, c);
      ASSERT_TRUE(rep.converged);
      EXPECT_LE(max_error(rep.final, truth), 1e-5) << solver_name(kind) << " seed " << seed;
    }
  }
}

TEST(Deer, TracksPerIterationLle) {
  const auto model = mean_field_rnn(10, 0.8, 200, 0);
  SolverConfig c = sequential_cfg();
  c.track_lle = true;
  const auto rep = deer_solve(model, random_initial_state(10, 0), c);
  ASSERT_TRUE(rep.per_iter_lle.has_value());
  EXPECT_EQ(rep.per_iter_lle->size(), rep.iterations + 1);
  LleOptions o;
  o.seed = c.seed;
  EXPECT_NEAR(rep.per_iter_lle->back(), trajectory_lle(model, rep.final, o), 1e-9);
}

TEST(Deer, QuadraticBasin) {
  const auto res = quadratic_basin_suite(10, 6);
  EXPECT_TRUE(res.ok()) << res.detail << ", worst margin " << res.worst_margin;
}

TEST(QuasiDeer, IdenticalToDeerOnDiagonalDynamics) {
  const DiagonalTanh model({0.5, 1.5, -0.9, 2.0}, {0.1, -0.2, 0.3, 0.0}, 300);
  const Vec s0{0.1, 0.2, 0.3, 0.4};
  const auto a = deer_solve(model, s0, sequential_cfg());
  const auto b = quasi_deer_solve(model, s0, sequential_cfg());
  ASSERT_EQ(a.iterations, b.iterations);
  EXPECT_LE(max_error(a.final, b.final), 1e-12);
  for (std::size_t i = 0; i < a.merit_history.size(); ++i)
    EXPECT_NEAR(a.merit_history[i], b.merit_history[i], 1e-12 * (1.0 + a.merit_history[i]));
}

TEST(QuasiDeer, NeedsMoreThanOneStepOnDenseLinear) {
  const auto model = random_linear_system(5, 200, 3, 0.9);
  SolverConfig c = sequential_cfg();
  c.tol = 1e-12;
  EXPECT_EQ(deer_solve(model, random_initial_state(5, 3), c).iterations, 1u);
  EXPECT_GT(quasi_deer_solve(model, random_initial_state(5, 3), c).iterations, 1u);
}

TEST(QuasiDeer, NeverFewerStepsThanDeerAcrossGainGrid) {
  for (double g : {0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0}) {
    const auto model = mean_field_rnn(20, g, 200, 0);
    const Vec s0 = random_initial_state(20, 0);
    const auto d = deer_solve(model, s0, sequential_cfg());
    const auto q = quasi_deer_solve(model, s0, sequential_cfg());
    EXPECT_GE(q.iterations, d.iterations) << "g=" << g;
  }
}

TEST(Gd, MonotoneMeritOnContractiveScalar) {
  const ScalarAffine model(0.5, 0.0, 4);
  SolverConfig c;
  c.step_size = 0.5;
  c.tol = 1e-12;
  c.max_iters = 500;
  const auto rep = gd_solve(model, Vec{1.0}, c);
  EXPECT_TRUE(rep.converged);
  for (std::size_t i = 1; i < rep.merit_history.size(); ++i)
    EXPECT_LT(rep.merit_history[i], rep.merit_history[i - 1]);
}

namespace {

struct SolverGrid {
  std::vector<double> lambda, deer, quasi, gd;
};

// Optimizer comparison on a small RNN grid at the loose tolerance of 0.1.
SolverGrid run_solver_grid() {
  SolverGrid out;
  const std::size_t D = 30, T = 50;
  const double alphas[] = {0.01, 0.1, 0.25, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  for (double g : {0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.6, 2.0, 2.5, 3.0}) {
    std::vector<double> lam, d, q;
    std::vector<std::vector<double>> per_alpha(std::size(alphas));
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto model = mean_field_rnn(D, g, T, seed);
      const Vec s0 = random_initial_state(D, seed);
      lam.push_back(trajectory_lle(model, sequential_rollout(model, s0, T)));
      SolverConfig c = sequential_cfg(seed);
      c.tol = 0.1;
      d.push_back(static_cast<double>(deer_solve(model, s0, c).iterations));
      q.push_back(static_cast<double>(quasi_deer_solve(model, s0, c).iterations));
      for (std::size_t a = 0; a < std::size(alphas); ++a) {
        SolverConfig gc = c;
        gc.step_size = alphas[a];
        gc.max_iters = 1000;
        const auto r = gd_solve(model, s0, gc);
        per_alpha[a].push_back(r.converged ? static_cast<double>(r.iterations) : 1001.0);
      }
    }
    double best = std::numeric_limits<double>::infinity();
    for (auto& v : per_alpha) best = std::min(best, median(v));
    out.lambda.push_back(median(lam));
    out.deer.push_back(median(d));
    out.quasi.push_back(median(q));
    out.gd.push_back(best);
  }
  return out;
}

const SolverGrid& solver_grid() {
  static const SolverGrid grid = run_solver_grid();
  return grid;
}

}  // namespace

TEST(Gd, StepsIncreaseWithLle) {
  const auto& g = solver_grid();
  EXPECT_GT(spearman(g.lambda, g.gd), 0.8) << ::testing::PrintToString(g.lambda) << "\n"
                                            << ::testing::PrintToString(g.gd);
}

TEST(SolverStrength, DeerThenQuasiThenGd) {
  const auto& g = solver_grid();
  for (std::size_t i = 0; i < g.lambda.size(); ++i) {
    EXPECT_LE(g.deer[i], g.quasi[i]) << "lambda " << g.lambda[i];
    EXPECT_LE(g.quasi[i], g.gd[i]) << "lambda " << g.lambda[i];
  }
}

TEST(NanPolicy, ResetOnlyTouchesBadRows) {
  Trajectory traj(Vec{0.0}, StateArray(8, 1, 5.0));
  traj.states()(2, 0) = std::nan("");
  DenseAffineSequence seq(8, 1);
  seq.offset(5)[0] = std::numeric_limits<double>::infinity();
  const StateArray fresh(8, 1, -1.0);
  ASSERT_TRUE(detail::reset_nonfinite(traj, seq, fresh));
  const double expected[] = {5, 5, -1, 5, -1, -1, 5, 5};
  for (std::size_t t = 0; t < 8; ++t) EXPECT_EQ(traj.states()(t, 0), expected[t]) << t;
}

TEST(NanPolicy, AbortCarriesPartialReport) {
  const auto model = mean_field_rnn(10, 2.0, 50, 0);
  SolverConfig c = sequential_cfg();
  c.step_size = 1e200;
  c.nan_policy = NanPolicy::abort;
  try {
    gd_solve(model, random_initial_state(10, 0), c);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    const auto& r = e.report();
    EXPECT_EQ(r.merit_history.size(), r.iterations + 1);
    EXPECT_FALSE(std::isfinite(r.merit_history.back()));
    EXPECT_FALSE(r.converged);
  }
}

TEST(NanPolicy, ResetCountsAndContinues) {
  const auto model = mean_field_rnn(10, 2.0, 50, 0);
  SolverConfig c = sequential_cfg();
  c.step_size = 1e200;
  c.max_iters = 6;
  const auto rep = gd_solve(model, random_initial_state(10, 0), c);
  EXPECT_GT(rep.nan_resets, 0u);
  EXPECT_EQ(rep.iterations, 6u);
  for (double m : rep.merit_history) EXPECT_TRUE(std::isfinite(m));
  expect_report_invariants(rep, c.tol);
}

TEST(NanPolicy, SameResetReusesOriginalDraw) {
  const auto model = mean_field_rnn(10, 2.0, 50, 0);
  SolverConfig c = sequential_cfg();
  c.step_size = 1e200;
  c.max_iters = 1;
  const Vec s0 = random_initial_state(10, 0);
  SolverConfig same = c;
  same.nan_reset_same = true;
  const auto a = gd_solve(model, s0, same);
  const auto b = gd_solve(model, s0, c);
  ASSERT_GT(a.nan_resets, 0u);
  // With the original draw restored the merit after the reset equals the initial merit.
  EXPECT_EQ(a.merit_history[1], a.merit_history[0]);
  EXPECT_NE(b.merit_history[1], b.merit_history[0]);
}

TEST(SolverConfigValidation, RejectsInvalidValues) {
  const auto model = mean_field_rnn(3, 0.8, 10, 0);
  const Vec s0(3, 0.0);
  SolverConfig c;
  c.tol = 0.0;
  EXPECT_THROW(deer_solve(model, s0, c), std::invalid_argument);
  c = {};
  c.max_iters = 0;
  EXPECT_THROW(deer_solve(model, s0, c), std::invalid_argument);
  c = {};
  c.step_size = -1.0;
  EXPECT_THROW(gd_solve(model, s0, c), std::invalid_argument);
  c = {};
  c.init = InitKind::given;
  EXPECT_THROW(deer_solve(model, s0, c), std::invalid_argument);
  c.initial = StateArray(9, 3);
  EXPECT_THROW(deer_solve(model, s0, c), std::invalid_argument);
  EXPECT_THROW(deer_solve(model, Vec(2, 0.0), SolverConfig{}), std::invalid_argument);
  EXPECT_THROW(parse_solver("newton"), std::invalid_argument);
  EXPECT_THROW(parse_init("ones"), std::invalid_argument);
  EXPECT_THROW(parse_nan_policy("ignore"), std::invalid_argument);
}
