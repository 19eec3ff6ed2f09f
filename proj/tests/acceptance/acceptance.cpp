// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are fixed here.
#include "passiv/passiv.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"

using namespace passiv;

namespace {

constexpr double kKktMatchTol = 1e-5;
constexpr double kKktRuntime = 10.0;
constexpr double kSwitchTol = 1e-6;
constexpr double kPassivitySlack = 1e-6;
constexpr double kSvmTol = 1e-5;
constexpr double kSvmOnPlaneTol = 1e-3;
constexpr int kSvmMinSv = 2;
constexpr int kSvmMaxSv = 20;
constexpr double kSvmRuntime = 120.0;
constexpr double kRlcTol = 1e-6;
constexpr double kMonotoneTol = 1e-6;
constexpr double kHvacTol = 1e-4;
constexpr double kLineProfileTol = 2e-3;
constexpr double kLineOrder = 1.8;
constexpr double kDissipationRel = 0.01;
constexpr double kLineRuntime = 60.0;
constexpr double kGradRelTol = 1e-5;
constexpr double kRk4Order = 3.9;
constexpr double kPairResidual = 1e-8;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ----------------------------------------------------------------------------- 1

void criterion_kkt_oracle(Outcome& out) {
  const auto t0 = Clock::now();
  SplitMix64 rng(20240611);
  double worst = 0.0;
  int solved = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto qp = oracle::random_qp(rng, 5, 2, 4);
    const auto ref = oracle::enumerate_active_sets(qp);
    if (!ref) {
      out.require(false, "oracle found no KKT point in trial " + std::to_string(trial));
      continue;
    }
    const ConvexProblem prob = oracle::to_problem(qp);
    FlowState init{Vec::Zero(qp.n), Vec::Zero(qp.A.rows()), Vec::Zero(qp.Gi.rows())};
    IntegratorConfig cfg;
    cfg.step = 0.02;
    cfg.max_time = 4000.0;
    cfg.convergence_tol = 1e-10;
    cfg.record_stride = 50;
    const auto res = solve(prob, init, TimeConstants::ones(qp.n, prob.m(), prob.p()), cfg);
    const double err = (res.final_state.x - ref->x).lpNorm<Eigen::Infinity>();
    worst = std::max(worst, err);
    if (err <= kKktMatchTol) ++solved;
  }
  const double elapsed = seconds_since(t0);
  out.detail << "matched " << solved << "/20, worst |x-x*|inf=" << worst << ", " << elapsed << " s";
  out.require(solved == 20, "all 20 within 1e-5");
  out.require(elapsed <= kKktRuntime, "runtime <= 10 s");
}

// ----------------------------------------------------------------------------- 2

void criterion_switched_storage(Outcome& out) {
  // min 1/2|x - (2,2)|^2 s.t. x1 <= 1, x2 <= 10. mu2 starts positive with g2 < 0 and decays
  // to zero (activation); x1 crosses 1 while mu1 = 0 (deactivation).
  ConvexProblem prob;
  prob.n = 2;
  prob.f = quadratic_function(Mat::Identity(2, 2), Vec::Constant(2, -2.0), 4.0);
  prob.A = Mat(0, 2);
  prob.b = Vec(0);
  prob.g = {affine_function(Eigen::Vector2d(1, 0), 1.0), affine_function(Eigen::Vector2d(0, 1), 10.0)};
  FlowState init{Vec::Zero(2), Vec(0), Eigen::Vector2d(0.0, 1.0)};
  IntegratorConfig cfg;
  cfg.step = 1e-3;
  cfg.max_time = 60.0;
  cfg.convergence_tol = 1e-10;
  const auto res = solve(prob, init, TimeConstants::ones(2, 0, 2), cfg);
  const auto audit = storage_switch_audit(res.storage, kSwitchTol);
  out.detail << "activations=" << audit.activations << " deactivations=" << audit.deactivations
             << " max activation jump=" << audit.max_activation_jump
             << " max |deactivation jump|=" << audit.max_deactivation_jump;
  out.require(audit.activations >= 1, ">= 1 activation");
  out.require(audit.deactivations >= 1, ">= 1 deactivation");
  out.require(audit.strict_decrease, "strict decrease at activations");
  out.require(audit.max_deactivation_jump <= kSwitchTol, "continuity at deactivations");
  out.require(audit.pass, "audit verdict");
  out.require(res.kkt_ok, "endpoint is KKT");
}

// ----------------------------------------------------------------------------- 3

double passivity_equality_flow() {
  ConvexProblem prob;
  prob.n = 3;
  Mat Q(3, 3);
  Q << 3, 1, 0, 1, 2, 0.5, 0, 0.5, 1.5;
  prob.f = quadratic_function(Q, Eigen::Vector3d(1, -1, 0.5));
  prob.A = (Mat(1, 3) << 1, 1, 1).finished();
  prob.b = Vec::Constant(1, 1.0);
  TimeConstants tc{Eigen::Vector3d(1.0, 0.5, 2.0), Vec::Constant(1, 0.7), Vec(0)};
  const Eigen::Vector3d dir(1.0, -2.0, 0.5);
  auto u = [&](double t) { return Vec(std::sin(2.0 * t) * dir); };
  auto udot = [&](double t) { return Vec(2.0 * std::cos(2.0 * t) * dir); };
  auto rates = [&](double t, const Vec& z) {
    const FlowState s = FlowState::unpack(z, 3, 1, 0);
    return equality_flow_rhs(prob, s, u(t), tc);
  };
  IntegratorConfig cfg;
  cfg.step = 1e-3;
  cfg.max_time = 20.0;
  Vec z0(4);
  z0 << 2.0, -1.0, 0.5, 1.0;
  const Trajectory traj = integrate(
      [&](double t, const Vec& z) {
        const auto r = rates(t, z);
        Vec d(4);
        d << r.dx, r.dlam;
        return d;
      },
      z0, cfg);
  const auto audit = passivity_audit(
      traj,
      [&](double t, const Vec& z) {
        const auto r = rates(t, z);
        return 0.5 * r.dx.dot(tc.tau_x.cwiseProduct(r.dx)) + 0.5 * r.dlam.dot(tc.tau_lam.cwiseProduct(r.dlam));
      },
      [&](double t, const Vec&) { return udot(t); },
      [&](double t, const Vec& z) { return Vec(-rates(t, z).dx); }, kPassivitySlack);
  return audit.report.min_margin;
}

double passivity_rlc_ramp() {
  const ParallelRLC p{1.0, 0.5, 0.8, 1.5};
  const double slope = 0.3;
  auto Vs = [&](double t) { return 1.0 + slope * t; };
  IntegratorConfig cfg;
  cfg.step = 1e-3;
  cfg.max_time = 20.0;
  const Trajectory traj = integrate(
      [&](double t, const Vec& x) { return Vec(prlc_rhs(p, x, Vs(t))); }, Eigen::Vector2d(0.5, -1.0), cfg);
  const Mat M = Eigen::Vector2d(p.L, p.C).asDiagonal();
  const auto audit = passivity_audit(
      traj,
      [&](double t, const Vec& x) { return krasovskii_storage(M, prlc_rhs(p, x, Vs(t))); },
      [&](double, const Vec&) { return Vec::Constant(1, slope); },
      [&](double t, const Vec& x) { return Vec::Constant(1, prlc_rhs(p, x, Vs(t))[0]); }, kPassivitySlack);
  return audit.report.min_margin;
}

double passivity_hvac_dynfb() {
  const HvacParams h;
  const auto sys = hvac_dyn_feedback_system(h);
  // Smooth random input: a few sinusoids with random amplitudes, frequencies and phases.
  SplitMix64 rng(7);
  std::vector<std::array<double, 3>> modes[2];
  for (auto& ch : modes)
    for (int k = 0; k < 4; ++k) ch.push_back({rng.uniform(-0.05, 0.05), rng.uniform(0.05, 1.0), rng.uniform(0, 6.3)});
  auto vdot = [&](double t) {
    Vec v = Vec::Zero(2);
    for (int c = 0; c < 2; ++c)
      for (const auto& m : modes[c]) v[c] += m[0] * std::sin(m[1] * t + m[2]);
    return v;
  };
  IntegratorConfig cfg;
  cfg.step = 0.01;
  cfg.max_time = 100.0;
  const auto start = hvac_equilibrium(h, 4.0, 7.0);
  const auto run = simulate_dyn_feedback_open(sys, vdot, Eigen::Vector4d(3, 8, 5, 6), start.u, cfg);
  return run.audit.report.min_margin;
}

void criterion_passivity(Outcome& out) {
  const double a = passivity_equality_flow();
  const double b = passivity_rlc_ramp();
  const double c = passivity_hvac_dynfb();
  out.detail << "min margins: equality flow " << a << ", RLC ramp " << b << ", HVAC " << c;
  out.require(a >= -kPassivitySlack, "(a) equality flow");
  out.require(b >= -kPassivitySlack, "(b) parallel RLC");
  out.require(c >= -kPassivitySlack, "(c) HVAC dynamic feedback");
}

// ----------------------------------------------------------------------------- 4

void criterion_svm(Outcome& out) {
  const auto t0 = Clock::now();
  const Dataset data = generate_gaussian_classes(42);
  IntegratorConfig cfg;
  cfg.step = 0.005;
  cfg.max_time = 600.0;
  cfg.convergence_tol = 1e-10;
  cfg.record_stride = 20;
  const auto run = train_svm(data, TimeConstants::ones(3, 0, static_cast<int>(data.size())), cfg);
  const double elapsed = seconds_since(t0);
  const auto& sv = run.svs;
  out.detail << "converged=" << run.solve.converged << " t=" << run.solve.traj.final_time()
             << " svs=" << sv.indices.size() << " comp_slack=" << run.solve.kkt.comp_slack
             << " representer=" << sv.representer_residual << " balance=" << sv.label_balance
             << " max|g_sv|=" << sv.max_support_g << ", " << elapsed << " s";
  const int count = static_cast<int>(sv.indices.size());
  out.require(data.size() == 600, "600 points");
  out.require(run.solve.converged, "flow converges");
  out.require(run.solve.kkt.comp_slack <= kSvmTol, "complementary slackness");
  out.require(sv.representer_residual <= kSvmTol, "representer residual");
  out.require(sv.label_balance <= kSvmTol, "label balance");
  out.require(count >= kSvmMinSv && count <= kSvmMaxSv, "support-vector count");
  out.require(sv.max_support_g <= kSvmOnPlaneTol, "support vectors on their planes");
  out.require(elapsed <= kSvmRuntime, "runtime <= 120 s");
}

// ----------------------------------------------------------------------------- 5

void criterion_rlc(Outcome& out) {
  IntegratorConfig cfg;
  cfg.step = 1e-3;
  cfg.max_time = 60.0;
  const double v_star = 1.0;

  const ParallelRLC a{1.0, 2.0, 1.0, 1.0};
  const auto eq_a = prlc_equilibrium(a, v_star);
  const auto run_a = simulate_prlc_power_shaping(a, v_star, 1.0, Eigen::Vector2d(0.0, 0.0), cfg);
  const Vec xa = run_a.traj.final_state();
  const double err_a = std::max(std::abs(xa[0] - eq_a.i_star), std::abs(xa[1] - v_star));
  const auto mono_a = monotone_audit(run_a.traj.times, run_a.lyapunov, kMonotoneTol);

  const ParallelRLC b{1.0, 0.5, 1.0, 2.0};
  const auto eq_b = prlc_equilibrium(b, v_star);
  cfg.max_time = 200.0;
  const auto run_b = simulate_prlc_pi(b, v_star, 1.0, 1.0, Eigen::Vector2d(0.0, 0.0), cfg);
  const Vec xb = run_b.traj.final_state();
  const double err_b = std::max(std::abs(xb[0] - eq_b.i_star), std::abs(xb[1] - v_star));
  const auto mono_b = monotone_audit(run_b.traj.times, run_b.lyapunov, kMonotoneTol);

  out.detail << "(a) G^2L>=C err=" << err_a << " monotone=" << mono_a.report.pass
             << "; (b) G^2L<C err=" << err_b << " monotone=" << mono_b.report.pass;
  out.require(a.shaping_certificate(), "(a) certificate holds");
  out.require(err_a <= kRlcTol, "(a) reaches (i*, v*)");
  out.require(mono_a.report.pass, "(a) Pd monotone");
  out.require(!b.shaping_certificate(), "(b) certificate unavailable");
  out.require(err_b <= kRlcTol, "(b) reaches (i*, v*)");
  out.require(mono_b.report.pass, "(b) Lyapunov monotone");
}

// ----------------------------------------------------------------------------- 6

void criterion_hvac(Outcome& out) {
  const HvacParams h;
  const double T1 = 2.5, T2 = 6.0;
  const auto target = hvac_equilibrium(h, T1, T2);
  const Eigen::Vector4d T0(8.0, 1.0, 4.0, 7.0);
  IntegratorConfig cfg;
  cfg.step = 0.05;
  cfg.max_time = 1500.0;
  cfg.record_stride = 10;

  const auto shaping = simulate_hvac_shaping(h, target, HvacShapingGains{}, T0, cfg);
  const Vec xs = shaping.traj.final_state();
  const double err_s = std::max(std::abs(xs[0] - T1), std::abs(xs[1] - T2));
  const auto mono_s = monotone_audit(shaping.traj.times, shaping.lyapunov, kMonotoneTol);

  const auto sys = hvac_dyn_feedback_system(h);
  const auto dyn = simulate_dyn_feedback(sys, target.T, DynFeedbackGains{}, T0, Vec::Zero(2), cfg);
  const Vec xd = dyn.traj.final_state();
  const double err_d = std::max(std::abs(xd[0] - T1), std::abs(xd[1] - T2));
  const auto mono_d = monotone_audit(dyn.traj.times, dyn.lyapunov, kMonotoneTol);

  out.detail << "shaping err=" << err_s << " monotone=" << mono_s.report.pass
             << "; dynamic feedback err=" << err_d << " monotone=" << mono_d.report.pass;
  out.require(err_s <= kHvacTol, "shaping reaches targets");
  out.require(mono_s.report.pass, "shaping Lyapunov monotone");
  out.require(err_d <= kHvacTol, "dynamic feedback reaches targets");
  out.require(mono_d.report.pass, "dynamic feedback Lyapunov monotone");
}

// ----------------------------------------------------------------------------- 7

LineParams acceptance_line() {
  LineParams p;
  p.R = 4.0;
  p.L = p.C = p.G = 1.0;
  return p;
}

double steady_profile_error(const LineParams& p, int M) {
  const auto eq = tline_equilibrium(p, 1.0, M);
  IntegratorConfig cfg;
  cfg.step = 0.5 * max_stable_step(p, M);
  cfg.max_time = 200.0;
  cfg.convergence_tol = 1e-11;
  cfg.record_stride = 1000;
  cfg.stop_on_convergence = true;
  const Trajectory traj = simulate_line_open(p, LineState::zero(M), eq.I0_star, cfg);
  const LineState s = LineState::unpack(traj.final_state(), M);
  return std::max((s.i - eq.state.i).lpNorm<Eigen::Infinity>(), (s.v - eq.state.v).lpNorm<Eigen::Infinity>());
}

void criterion_line(Outcome& out) {
  const LineParams p = acceptance_line();

  // (a) steady state against the closed-form profile
  auto t0 = Clock::now();
  const double e50 = steady_profile_error(p, 50);
  const double e100 = steady_profile_error(p, 100);
  const double e200 = steady_profile_error(p, 200);
  const double order = std::min(std::log2(e50 / e100), std::log2(e100 / e200));
  const double time_a = seconds_since(t0);
  out.detail << "(a) err@100=" << e100 << " order=" << order;
  out.require(e100 <= kLineProfileTol, "(a) profile error at M=100");
  out.require(order >= kLineOrder, "(a) spatial order");
  out.require(time_a <= kLineRuntime, "(a) runtime");

  // (b) dissipation obstacle
  const auto obstacle = dissipation_obstacle_report(p, 1.0, 100);
  out.detail << "; (b) supply=" << obstacle.supply << " mismatch=" << obstacle.relative_mismatch;
  out.require(obstacle.supply > 0.0, "(b) equilibrium supply > 0");
  out.require(obstacle.relative_mismatch <= kDissipationRel, "(b) matches dissipation");

  // (c) admissible parameter search on random lines
  SplitMix64 rng(99);
  int feasible = 0;
  for (int k = 0; k < 100; ++k) {
    LineParams q;
    q.R = std::exp(rng.uniform(-2, 2));
    q.L = std::exp(rng.uniform(-2, 2));
    q.C = std::exp(rng.uniform(-2, 2));
    q.G = std::exp(rng.uniform(-2, 2));
    try {
      const auto adm = admissible_params_search(q);
      if (adm.first_condition() && adm.second_condition() && adm.zeta_bound()) ++feasible;
    } catch (const std::exception&) {
    }
  }
  out.detail << "; (c) " << feasible << "/100";
  out.require(feasible == 100, "(c) all parameter sets satisfy the conditions");

  // (d) boundary PI closed loop
  t0 = Clock::now();
  const int M = 100;
  IntegratorConfig cfg;
  cfg.step = 0.5 / M;
  cfg.max_time = 60.0;
  cfg.record_stride = 10;
  const auto run = simulate_line_pi(p, 1.0, 1.0, 1.0, LineState::zero(M), cfg);
  const double dist0 = line_distance_norm(p, LineState::unpack(run.traj.states.front(), M), run.eq);
  const double dist = line_distance_norm(p, LineState::unpack(run.traj.final_state(), M), run.eq);
  const auto mono = monotone_audit(run.traj.times, run.lyapunov, kMonotoneTol);
  out.detail << "; (d) distance " << dist0 << " -> " << dist << " monotone=" << mono.report.pass;
  out.require(dist <= 1e-6 * std::max(1.0, dist0), "(d) converges");
  out.require(mono.report.pass, "(d) Pd monotone");
  out.require(seconds_since(t0) <= kLineRuntime, "(d) runtime");

  // (e) lossless conservation residuals
  LineParams lossless = p;
  lossless.R = lossless.G = 0.0;
  std::vector<double> res;
  for (int Mc : {25, 50, 100}) {
    const auto init = oracle::compatible_lossless_start(Mc);
    IntegratorConfig c;
    c.step = 0.2 / Mc;
    c.max_time = 1.0;
    const Trajectory tr = simulate_line_open(lossless, init.state, init.I0, c);
    const auto rep = conservation_check(lossless, tr, Mc);
    res.push_back(std::max(rep.max_residual_current, rep.max_residual_voltage));
  }
  const double cons_order = std::min(std::log2(res[0] / res[1]), std::log2(res[1] / res[2]));
  out.detail << "; (e) residuals " << res[0] << ", " << res[1] << ", " << res[2] << " order=" << cons_order;
  out.require(cons_order >= kLineOrder, "(e) residuals shrink O(dz^2)");
}

// ----------------------------------------------------------------------------- 8

void criterion_hygiene(Outcome& out) {
  SplitMix64 rng(5);
  double worst_grad = 0.0;
  auto grad_check = [&](const ScalarOracle& f, const VectorOracle& g, const Vec& x) {
    const Vec fd = finite_diff_gradient(f, x, 1e-6);
    const Vec an = g(x);
    worst_grad = std::max(worst_grad, (fd - an).lpNorm<Eigen::Infinity>() / std::max(1.0, an.lpNorm<Eigen::Infinity>()));
  };
  const auto rlc = prlc_bm_system(ParallelRLC{1.3, 0.7, 0.9, 1.1});
  const auto hvac = hvac_bm_system(HvacParams{});
  const auto svm_prob = build_svm_problem(generate_gaussian_classes(3, GaussianClassSpec{10}));
  for (int k = 0; k < 20; ++k) {
    const Vec x2 = Vec::NullaryExpr(2, [&] { return rng.uniform(-2, 2); });
    grad_check(rlc.P, rlc.gradP, x2);
    const Vec x4 = Vec::NullaryExpr(4, [&] { return rng.uniform(1, 9); });
    grad_check(hvac.P, hvac.gradP, x4);
    const Vec x3 = Vec::NullaryExpr(3, [&] { return rng.uniform(-1, 1); });
    grad_check(svm_prob.f.value, svm_prob.f.gradient, x3);
    for (const auto& g : svm_prob.g) grad_check(g.value, g.gradient, x3);
  }
  const auto ball = make_inequality("ball", 3, {{"center", {0.5, -1, 2}}, {"radius", {1.5}}});
  for (int k = 0; k < 20; ++k) grad_check(ball.value, ball.gradient, Vec::NullaryExpr(3, [&] { return rng.uniform(-3, 3); }));

  const double order = oracle::rk4_observed_order();

  std::vector<SamplePoint> samples;
  for (int k = 0; k < 20; ++k)
    samples.push_back({Vec::NullaryExpr(2, [&] { return rng.uniform(-2, 2); }), Vec::Constant(1, rng.uniform(-1, 1))});
  const ParallelRLC prm{1.0, 2.0, 1.0, 1.0};
  const auto pair = admissible_pair(prlc_bm_system(prm), 1.0, prlc_admissible_M(prm), samples);

  out.detail << "worst gradient rel err=" << worst_grad << " rk4 order=" << order
             << " pair residual=" << pair.max_residual;
  out.require(worst_grad <= kGradRelTol, "gradients");
  out.require(order >= kRk4Order, "RK4 order");
  out.require(pair.max_residual <= kPairResidual, "admissible pair residual");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"1 kkt-oracle-equivalence", criterion_kkt_oracle},
      {"2 switched-storage", criterion_switched_storage},
      {"3 passivity-inequalities", criterion_passivity},
      {"4 svm-600-points", criterion_svm},
      {"5 parallel-rlc-controllers", criterion_rlc},
      {"6 hvac-controllers", criterion_hvac},
      {"7 transmission-line", criterion_line},
      {"8 numerical-hygiene", criterion_hygiene},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome out;
    try {
      fn(out);
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << " [exception: " << e.what() << "]";
    }
    if (!out.pass) ++failures;
    std::printf("%s %s: %s\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
