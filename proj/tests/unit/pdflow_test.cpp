#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace passiv;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) r[k++] = x;
  return r;
}

ConvexProblem sphere(int n) {
  ConvexProblem prob;
  prob.n = n;
  prob.f = quadratic_function(Mat::Identity(n, n), Vec::Zero(n));
  prob.A = Mat::Zero(0, n);
  prob.b = Vec::Zero(0);
  return prob;
}

// 1/2 |x|^2  s.t.  x1 + x2 = 2; optimum (1, 1), lambda = -1
ConvexProblem sum_qp() {
  auto prob = sphere(2);
  prob.A = Mat::Ones(1, 2);
  prob.b = vec({2.0});
  return prob;
}

// 1/2 x^2  s.t.  -x <= 0
ConvexProblem nonneg_1d() {
  auto prob = sphere(1);
  prob.g.push_back(affine_function(vec({-1.0}), 0.0));
  return prob;
}

FlowState state(Vec x, Vec lam, Vec mu) { return {std::move(x), std::move(lam), std::move(mu)}; }

IntegratorConfig solve_cfg(double max_time) {
  IntegratorConfig c;
  c.step = 0.01;
  c.max_time = max_time;
  c.convergence_tol = 1e-9;
  c.stop_on_convergence = true;
  return c;
}

}  // namespace

TEST(Lagrangian, Unconstrained) {
  const auto prob = sphere(2);
  EXPECT_DOUBLE_EQ(lagrangian(prob, state(vec({1, 2}), Vec(0), Vec(0))), 2.5);
}

TEST(Lagrangian, OneEquality) {
  auto prob = sphere(2);
  prob.A = (Mat(1, 2) << 1, 0).finished();
  prob.b = vec({1.0});
  EXPECT_DOUBLE_EQ(lagrangian(prob, state(vec({0, 0}), vec({2}), Vec(0))), -2.0);
}

TEST(Lagrangian, RandomQpTermByTerm) {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto qp = oracle::random_qp(rng, 5, 2, 4);
    const auto prob = oracle::to_problem(qp);
    const Vec x = Vec::NullaryExpr(qp.n, [&] { return rng.uniform(-1, 1); });
    const Vec lam = Vec::NullaryExpr(qp.A.rows(), [&] { return rng.uniform(-1, 1); });
    const Vec mu = Vec::NullaryExpr(qp.Gi.rows(), [&] { return rng.uniform(0, 1); });
    double L = 0.5 * x.dot(qp.Q * x) + qp.c.dot(x);
    for (int i = 0; i < lam.size(); ++i) L += lam[i] * (qp.A.row(i).dot(x) - qp.b[i]);
    for (int i = 0; i < mu.size(); ++i) L += mu[i] * (qp.Gi.row(i).dot(x) - qp.h[i]);
    EXPECT_NEAR(lagrangian(prob, state(x, lam, mu)), L, 1e-12);
  }
}

TEST(Kkt, Residuals) {
  const auto unc = kkt_residual(sphere(2), state(Vec::Zero(2), Vec(0), Vec(0)));
  EXPECT_TRUE(unc.optimal(0.0));
  const auto at_opt = kkt_residual(sum_qp(), state(vec({1, 1}), vec({-1}), Vec(0)));
  EXPECT_LE(at_opt.stationarity, 1e-12);
  EXPECT_LE(at_opt.eq_violation, 1e-12);
  EXPECT_DOUBLE_EQ(kkt_residual(sum_qp(), state(vec({0, 0}), vec({0}), Vec(0))).eq_violation, 2.0);
}

TEST(EqualityFlow, Equilibrium) {
  const auto prob = sum_qp();
  const auto r = equality_flow_rhs(prob, state(vec({1, 1}), vec({-1}), Vec(0)), Vec::Zero(2),
                                   TimeConstants::ones(2, 1, 0));
  EXPECT_LE(r.dx.norm(), 1e-15);
  EXPECT_LE(r.dlam.norm(), 1e-15);
}

TEST(EqualityFlow, GradientDescentRate) {
  const auto r = equality_flow_rhs(sphere(1), state(vec({3}), Vec(0), Vec(0)), Vec::Zero(1),
                                   TimeConstants::ones(1, 0, 0));
  EXPECT_DOUBLE_EQ(r.dx[0], -3.0);
}

TEST(EqualityFlow, MatchesFlowMapDifference) {
  const auto prob = sum_qp();
  const auto tc = TimeConstants{vec({1.0, 2.0}), vec({0.5}), Vec(0)};
  const Vec u = vec({0.3, -0.2});
  const VectorField f = [&](double, const Vec& z) {
    const auto s = FlowState::unpack(z, 2, 1, 0);
    const auto r = equality_flow_rhs(prob, s, u, tc);
    return Vec(FlowRates{r.dx, r.dlam, Vec(0)}.pack());
  };
  const Vec z = vec({0.4, -1.0, 0.7});
  const double h = 1e-5;
  const Vec fd = (rk4_step(f, 0, z, h) - rk4_step(f, 0, z, -h)) / (2 * h);
  EXPECT_LE((fd - f(0, z)).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(PositiveProjection, Branches) {
  EXPECT_EQ(positive_projection(-1.0, 0.0), 0.0);
  EXPECT_EQ(positive_projection(-1.0, 0.5), -1.0);
  EXPECT_EQ(positive_projection(2.0, 0.0), 2.0);
  EXPECT_THROW(positive_projection(1.0, -0.1), std::invalid_argument);
}

TEST(ActiveSet, Cases) {
  EXPECT_TRUE(active_set(state(Vec(0), Vec(0), vec({1, 2})), vec({-1, -1})).empty());
  EXPECT_EQ(active_set(state(Vec(0), Vec(0), vec({0, 1})), vec({-1, -1})), std::vector<int>{0});
  EXPECT_TRUE(active_set(state(Vec(0), Vec(0), vec({0})), vec({1})).empty());
  EXPECT_TRUE(active_set(state(Vec(0), Vec(0), vec({0})), vec({0})).empty());
}

TEST(Interconnected, ZeroAtKktPoint) {
  auto prob = sum_qp();
  prob.g.push_back(affine_function(vec({1, 0}), 100.0));
  const auto r = interconnected_rhs(prob, state(vec({1, 1}), vec({-1}), vec({0})), Vec::Zero(2), Vec::Zero(2),
                                    TimeConstants::ones(2, 1, 1));
  EXPECT_LE(r.dx.norm() + r.dlam.norm() + r.dmu.norm(), 1e-15);
}

TEST(Interconnected, ReducesToEqualityFlow) {
  const auto prob = sum_qp();
  const auto s = state(vec({0.2, 0.5}), vec({0.3}), Vec(0));
  const Vec v = vec({0.1, -0.4});
  const auto tc = TimeConstants::ones(2, 1, 0);
  const auto a = interconnected_rhs(prob, s, v, Vec::Zero(2), tc);
  const auto b = equality_flow_rhs(prob, s, v, tc);
  EXPECT_EQ((a.dx - b.dx).norm(), 0.0);
  EXPECT_EQ((a.dlam - b.dlam).norm(), 0.0);
}

TEST(Solve, EqualityQp) {
  const auto res = solve(sum_qp(), state(Vec::Zero(2), Vec::Zero(1), Vec(0)), TimeConstants::ones(2, 1, 0),
                         solve_cfg(200));
  EXPECT_TRUE(res.converged);
  EXPECT_NEAR(res.final_state.x[0], 1.0, 1e-6);
  EXPECT_NEAR(res.final_state.x[1], 1.0, 1e-6);
  EXPECT_NEAR(res.final_state.lam[0], -1.0, 1e-6);
  EXPECT_TRUE(res.kkt.optimal(1e-6));
}

TEST(Solve, InactiveInequality) {
  auto prob = sum_qp();
  prob.g.push_back(affine_function(vec({1, 0}), 100.0));
  const auto res = solve(prob, state(Vec::Zero(2), Vec::Zero(1), vec({0.5})), TimeConstants::ones(2, 1, 1),
                         solve_cfg(200));
  EXPECT_TRUE(res.kkt_ok);
  EXPECT_NEAR(res.final_state.x[0], 1.0, 1e-6);
  EXPECT_NEAR(res.final_state.mu[0], 0.0, 1e-6);
}

TEST(Solve, InfeasibleStart1d) {
  const auto res = solve(nonneg_1d(), state(vec({-1}), Vec(0), vec({0})), TimeConstants::ones(1, 0, 1),
                         solve_cfg(400));
  EXPECT_TRUE(res.converged);
  EXPECT_NEAR(res.final_state.x[0], 0.0, 1e-6);
  EXPECT_GE(res.final_state.mu[0], 0.0);
  EXPECT_LE(res.kkt.comp_slack, 1e-6);
}

TEST(Solve, MatchesActiveSetOracle) {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const auto qp = oracle::random_qp(rng, 4, 2, 3);
    const auto ref = oracle::enumerate_active_sets(qp);
    ASSERT_TRUE(ref.has_value());
    const auto prob = oracle::to_problem(qp);
    const int m = static_cast<int>(qp.A.rows()), p = static_cast<int>(qp.Gi.rows());
    auto c = solve_cfg(4000);
    c.step = 0.02;
    c.convergence_tol = 1e-10;
    c.record_stride = 50;
    const auto res = solve(prob, state(Vec::Zero(qp.n), Vec::Zero(m), Vec::Zero(p)), TimeConstants::ones(qp.n, m, p), c);
    EXPECT_LE((res.final_state.x - ref->x).lpNorm<Eigen::Infinity>(), 1e-5) << "trial " << trial;
  }
}

TEST(Damping, ZeroGainMatchesUndamped) {
  const auto prob = sum_qp();
  const auto s = state(vec({0.3, -0.8}), vec({0.2}), Vec(0));
  const auto tc = TimeConstants::ones(2, 1, 0);
  const auto a = damping_injection_rhs(prob, s, 0.0, tc);
  const auto b = interconnected_rhs(prob, s, Vec::Zero(2), Vec::Zero(2), tc);
  EXPECT_EQ((a.pack() - b.pack()).norm(), 0.0);
}

TEST(Damping, MatchesAugmentedObjective) {
  const double k = 3.0;
  const auto prob = sum_qp();
  auto aug = prob;
  aug.f = quadratic_function(Mat::Identity(2, 2) + k * prob.A.transpose() * prob.A,
                             -k * prob.A.transpose() * prob.b, 0.5 * k * prob.b.squaredNorm());
  const auto s = state(vec({0.3, -0.8}), vec({0.2}), Vec(0));
  const auto tc = TimeConstants::ones(2, 1, 0);
  const auto a = damping_injection_rhs(prob, s, k, tc);
  const auto b = interconnected_rhs(aug, s, Vec::Zero(2), Vec::Zero(2), tc);
  EXPECT_LE((a.pack() - b.pack()).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Damping, SameOptimumForAnyGain) {
  const auto prob = sum_qp();
  const auto tc = TimeConstants::ones(2, 1, 0);
  for (double k : {0.0, 1.0, 10.0}) {
    SolveOptions opt;
    opt.rates = [&](const FlowState& s) { return damping_injection_rhs(prob, s, k, tc); };
    auto c = solve_cfg(200);
    c.step = 0.005;
    const auto res = solve(prob, state(Vec::Zero(2), Vec::Zero(1), Vec(0)), tc, c, opt);
    EXPECT_NEAR(res.final_state.x[0], 1.0, 1e-6) << "k = " << k;
    EXPECT_NEAR(res.final_state.lam[0], -1.0, 1e-6) << "k = " << k;
  }
  EXPECT_THROW(damping_injection_rhs(prob, state(Vec::Zero(2), Vec::Zero(1), Vec(0)), -1.0, tc),
               std::invalid_argument);
}

TEST(SwitchedStorage, Values) {
  const auto tc = TimeConstants{vec({1, 2}), vec({3}), vec({0.5, 4})};
  FlowRates zero{Vec::Zero(2), Vec::Zero(1), Vec::Zero(2)};
  EXPECT_EQ(switched_storage(zero, {}, tc), 0.0);
  FlowRates r{vec({1, -1}), vec({2}), vec({3, -2})};
  EXPECT_DOUBLE_EQ(switched_storage(r, {}, tc), 0.5 * (1 + 2 + 12 + 4.5 + 16));
  EXPECT_DOUBLE_EQ(switched_storage(r, {1}, tc), 0.5 * (1 + 2 + 12 + 4.5));
  FlowRates eq_only{vec({1, -1}), vec({2}), Vec(0)};
  EXPECT_DOUBLE_EQ(switched_storage(eq_only, {}, TimeConstants{vec({1, 2}), vec({3}), Vec(0)}),
                   0.5 * (1 + 2 + 12));
}

TEST(SwitchedStorage, RandomComponentSum) {
  SplitMix64 rng(21);
  auto draw = [&](int n, double lo, double hi) { return Vec(Vec::NullaryExpr(n, [&] { return rng.uniform(lo, hi); })); };
  for (int trial = 0; trial < 20; ++trial) {
    const auto tc = TimeConstants{draw(3, 0.1, 2), draw(2, 0.1, 2), draw(4, 0.1, 2)};
    FlowRates r{draw(3, -1, 1), draw(2, -1, 1), draw(4, -1, 1)};
    const std::vector<int> sigma{0, 2};
    double S = 0.0;
    for (int i = 0; i < 3; ++i) S += 0.5 * tc.tau_x[i] * r.dx[i] * r.dx[i];
    for (int i = 0; i < 2; ++i) S += 0.5 * tc.tau_lam[i] * r.dlam[i] * r.dlam[i];
    for (int i : {1, 3}) S += 0.5 * tc.tau_mu[i] * r.dmu[i] * r.dmu[i];
    EXPECT_NEAR(switched_storage(r, sigma, tc), S, 1e-14);
  }
}

TEST(SwitchAudit, NoSwitchesPasses) {
  const auto rep = storage_switch_audit(StorageTrace{});
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.activations + rep.deactivations, 0);
}

// mu starts positive with g < 0, reaches zero and parks: an activation with a storage drop.
TEST(SwitchAudit, ActivationJumpIsNonpositive) {
  auto prob = sphere(1);
  prob.g.push_back(affine_function(vec({1.0}), 1.0));
  const auto res = solve(prob, state(vec({0.0}), Vec(0), vec({0.5})), TimeConstants::ones(1, 0, 1), solve_cfg(100));
  const auto rep = storage_switch_audit(res.storage);
  EXPECT_GE(rep.activations, 1);
  EXPECT_TRUE(rep.pass);
  EXPECT_LT(rep.max_activation_jump, 0.0);
}

// x drifts until g crosses zero with mu = 0: the constraint leaves sigma continuously.
TEST(SwitchAudit, DeactivationIsContinuous) {
  ConvexProblem prob;
  prob.n = 1;
  prob.f = quadratic_function(Mat::Identity(1, 1), vec({-3.0}));
  prob.A = Mat::Zero(0, 1);
  prob.b = Vec(0);
  prob.g.push_back(affine_function(vec({1.0}), 1.0));
  const auto res = solve(prob, state(vec({0.0}), Vec(0), vec({0.0})), TimeConstants::ones(1, 0, 1), solve_cfg(200));
  const auto rep = storage_switch_audit(res.storage);
  EXPECT_GE(rep.deactivations, 1);
  EXPECT_LE(rep.max_deactivation_jump, 1e-6);
  EXPECT_TRUE(rep.pass);
  EXPECT_NEAR(res.final_state.x[0], 1.0, 1e-6);
  EXPECT_NEAR(res.final_state.mu[0], 2.0, 1e-6);
}

TEST(Registry, BuiltinInequalities) {
  const auto names = registered_inequalities();
  EXPECT_NE(std::find(names.begin(), names.end(), "ball"), names.end());
  const auto ball = make_inequality("ball", 2, {{"center", {1.0, 0.0}}, {"radius", {2.0}}});
  EXPECT_DOUBLE_EQ(ball.value(vec({1, 0})), -4.0);
  const Vec g = ball.gradient(vec({2, 1}));
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], 2.0);
  EXPECT_THROW(make_inequality("no-such", 2, {}), std::invalid_argument);
}

TEST(CheckProblem, ConvexQp) {
  SplitMix64 rng(4);
  const auto prob = oracle::to_problem(oracle::random_qp(rng, 4, 1, 2));
  const auto rep = check_problem(prob, {Vec::Zero(prob.n), Vec::Ones(prob.n)});
  EXPECT_TRUE(rep.ok());
}
