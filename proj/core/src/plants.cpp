#include "passiv/plants.hpp"

#include <cmath>

namespace passiv {

namespace {

void require_positive(double v, const std::string& name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(name + " must be finite and > 0");
}

void require_spd(const Mat& A, const std::string& name) {
  if (A.rows() != A.cols() || A.rows() == 0) throw std::invalid_argument(name + " must be square");
  if ((A - A.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * std::max(1.0, A.lpNorm<Eigen::Infinity>()))
    throw std::invalid_argument(name + " must be symmetric");
  if (Eigen::LLT<Mat>(A).info() != Eigen::Success)
    throw std::invalid_argument(name + " must be positive definite");
}

double min_eig(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

ClosedLoopRun finish_monotone(Trajectory traj, std::vector<double> lyap, std::vector<std::string> columns) {
  ClosedLoopRun run;
  run.audit = monotone_audit(traj.times, lyap);
  run.traj = std::move(traj);
  run.lyapunov = std::move(lyap);
  run.columns = std::move(columns);
  return run;
}

}  // namespace

// ---------------------------------------------------------------- parallel RLC

void ParallelRLC::validate() const {
  require_positive(R, "R");
  require_positive(G, "G");
  require_positive(L, "L");
  require_positive(C, "C");
}

Eigen::Vector2d prlc_rhs(const ParallelRLC& p, const Eigen::Vector2d& s, double Vs) {
  return {(Vs - p.R * s[0] - s[1]) / p.L, (s[0] - p.G * s[1]) / p.C};
}

PseudoGradientSystem prlc_bm_system(const ParallelRLC& p) {
  PseudoGradientSystem sys;
  sys.n = 2;
  sys.m = 1;
  sys.Q = [p](const Vec&) { return Mat(Eigen::Vector2d(-p.L, p.C).asDiagonal()); };
  sys.P = [p](const Vec& x) {
    return -0.5 * p.G * x[1] * x[1] + x[1] * x[0] + 0.5 * p.R * x[0] * x[0];
  };
  sys.gradP = [p](const Vec& x) { return Vec(Eigen::Vector2d(p.R * x[0] + x[1], x[0] - p.G * x[1])); };
  sys.hessP = [p](const Vec&) { return Mat((Mat(2, 2) << p.R, 1.0, 1.0, -p.G).finished()); };
  sys.G = [](const Vec&) { return Mat((Mat(2, 1) << -1.0, 0.0).finished()); };
  return sys;
}

PrlcEquilibrium prlc_equilibrium(const ParallelRLC& p, double v_star) {
  const double i_star = p.G * v_star;
  return {i_star, v_star + p.R * i_star};
}

Mat prlc_admissible_M(const ParallelRLC& p) {
  Mat M = Mat::Zero(2, 2);
  M(1, 1) = 2.0 / p.G;
  return M;
}

double prlc_shaped_potential(const ParallelRLC& p, const Eigen::Vector2d& s, double i_star, double K) {
  const double a = p.G * s[1] - s[0];
  const double e = s[0] - i_star;
  return a * a / (2.0 * p.G) + 0.5 * (p.R + 1.0 / p.G + K) * e * e;
}

PowerShapingOutput prlc_power_shaping(const ParallelRLC& p, const Eigen::Vector2d& s, double i_star,
                                      double K) {
  if (K < 0.0) throw std::invalid_argument("K must be >= 0");
  PowerShapingOutput out;
  out.Vs = -K * (s[0] - i_star) + (p.R + 1.0 / p.G) * i_star;
  out.Pd = prlc_shaped_potential(p, s, i_star, K);
  out.certificate = p.shaping_certificate();
  return out;
}

PiOutput prlc_krasovskii_pi(const ParallelRLC& p, const Eigen::Vector2d& s, double ctrl_state,
                            double i_star, double v_star, double K_P, double K_I) {
  if (K_P < 0.0) throw std::invalid_argument("K_P must be >= 0");
  if (K_I < 0.0) throw std::invalid_argument("K_I must be >= 0");
  return {-K_P * (s[0] - i_star) - K_I * ctrl_state + p.R * i_star + v_star, s[0] - i_star};
}

ClosedLoopRun simulate_prlc_power_shaping(const ParallelRLC& p, double v_star, double K,
                                          const Eigen::Vector2d& x0, const IntegratorConfig& cfg) {
  p.validate();
  const double i_star = prlc_equilibrium(p, v_star).i_star;
  auto rhs = [&](double, const Vec& x) {
    const Eigen::Vector2d s = x;
    return Vec(prlc_rhs(p, s, prlc_power_shaping(p, s, i_star, K).Vs));
  };
  Trajectory traj = integrate(rhs, x0, cfg);
  std::vector<double> lyap;
  for (const auto& x : traj.states) lyap.push_back(prlc_shaped_potential(p, x, i_star, K));
  auto run = finish_monotone(std::move(traj), std::move(lyap), {"i", "v"});
  if (!p.shaping_certificate())
    run.warnings.push_back("G^2 L < C: shaped potential is not a certified Lyapunov function");
  return run;
}

ClosedLoopRun simulate_prlc_pi(const ParallelRLC& p, double v_star, double K_P, double K_I,
                               const Eigen::Vector2d& x0, const IntegratorConfig& cfg) {
  p.validate();
  const double i_star = prlc_equilibrium(p, v_star).i_star;
  auto rates = [&](const Vec& x) {
    const Eigen::Vector2d s = x.head<2>();
    const auto ctl = prlc_krasovskii_pi(p, s, x[2], i_star, v_star, K_P, K_I);
    const Eigen::Vector2d d = prlc_rhs(p, s, ctl.Vs);
    return Vec((Vec(3) << d[0], d[1], ctl.ctrl_rate).finished());
  };
  Vec z0(3);
  z0 << x0, 0.0;
  Trajectory traj = integrate([&](double, const Vec& x) { return rates(x); }, z0, cfg);
  std::vector<double> lyap;
  for (const auto& x : traj.states) {
    const Vec d = rates(x);
    const double e = x[0] - i_star;
    lyap.push_back(0.5 * p.L * d[0] * d[0] + 0.5 * p.C * d[1] * d[1] + 0.5 * K_I * e * e);
  }
  return finish_monotone(std::move(traj), std::move(lyap), {"i", "v", "xi"});
}

// --------------------------------------------------------------- complete RLC

void CompleteRLC::validate() const {
  require_spd(L, "L");
  require_spd(C, "C");
  if (Gamma.rows() != L.rows() || Gamma.cols() != C.rows())
    throw std::invalid_argument("Gamma must be nL x nC");
  if (Bs.rows() != L.rows()) throw std::invalid_argument("Bs must have nL rows");
  if (!content.value || !content.gradient || !content.hessian)
    throw std::invalid_argument("content needs value, gradient and hessian");
  if (!cocontent.value || !cocontent.gradient || !cocontent.hessian)
    throw std::invalid_argument("cocontent needs value, gradient and hessian");
}

double CompleteRLC::mixed_potential(const Vec& i, const Vec& v) const {
  return i.dot(Gamma * v) + content.value(i) - cocontent.value(v);
}

Vec complete_rlc_rhs(const CompleteRLC& c, const Vec& state, const Vec& Vs) {
  const int nL = c.nL(), nC = c.nC();
  if (state.size() != nL + nC || Vs.size() != c.nE())
    throw std::invalid_argument("complete_rlc_rhs: dimension mismatch");
  const Vec i = state.head(nL);
  const Vec v = state.tail(nC);
  const Vec grad_i = c.Gamma * v + c.content.gradient(i);
  const Vec grad_v = c.Gamma.transpose() * i - c.cocontent.gradient(v);
  Vec out(nL + nC);
  out.head(nL) = c.L.llt().solve(-(grad_i - c.Bs * Vs));
  out.tail(nC) = c.C.llt().solve(grad_v);
  return out;
}

double complete_rlc_storage(const CompleteRLC& c, const Vec& rates) {
  const Vec it = rates.head(c.nL());
  const Vec vt = rates.tail(c.nC());
  return 0.5 * it.dot(c.L * it) + 0.5 * vt.dot(c.C * vt);
}

double complete_rlc_min_curvature(const CompleteRLC& c, const Vec& state) {
  return std::min(min_eig(c.content.hessian(state.head(c.nL()))),
                  min_eig(c.cocontent.hessian(state.tail(c.nC()))));
}

// ---------------------------------------------------------------------- HVAC

void HvacParams::validate() const {
  require_positive(C1, "C1");
  require_positive(C2, "C2");
  require_positive(C3, "C3");
  require_positive(C4, "C4");
  require_positive(R31, "R31");
  require_positive(R42, "R42");
  require_positive(R34, "R34");
  require_positive(R10, "R10");
  require_positive(R20, "R20");
  require_positive(cp, "cp");
  if (!std::isfinite(Ts) || !std::isfinite(Tinf)) throw std::invalid_argument("Ts and Tinf must be finite");
}

namespace {

// Heat-flow terms of each balance, without the supply air.
Eigen::Vector4d hvac_conduction(const HvacParams& h, const Eigen::Vector4d& T) {
  return {(T[2] - T[0]) / h.R31 + (h.Tinf - T[0]) / h.R10,
          (T[3] - T[1]) / h.R42 + (h.Tinf - T[1]) / h.R20,
          (T[0] - T[2]) / h.R31 + (T[3] - T[2]) / h.R34,
          (T[1] - T[3]) / h.R42 + (T[2] - T[3]) / h.R34};
}

Eigen::Matrix4d hvac_conduction_jacobian(const HvacParams& h) {
  Eigen::Matrix4d K = Eigen::Matrix4d::Zero();
  K(0, 0) = -1.0 / h.R31 - 1.0 / h.R10;
  K(0, 2) = 1.0 / h.R31;
  K(1, 1) = -1.0 / h.R42 - 1.0 / h.R20;
  K(1, 3) = 1.0 / h.R42;
  K(2, 0) = 1.0 / h.R31;
  K(2, 2) = -1.0 / h.R31 - 1.0 / h.R34;
  K(2, 3) = 1.0 / h.R34;
  K(3, 1) = 1.0 / h.R42;
  K(3, 2) = 1.0 / h.R34;
  K(3, 3) = -1.0 / h.R42 - 1.0 / h.R34;
  return K;
}

void require_off_supply(const HvacParams& h, double T, const char* name) {
  if (std::abs(h.Ts - T) < 1e-12)
    throw std::domain_error(std::string(name) + " equals the supply temperature Ts");
}

}  // namespace

Eigen::Vector4d hvac_rhs(const HvacParams& h, const Eigen::Vector4d& T, const Eigen::Vector2d& u) {
  Eigen::Vector4d q = hvac_conduction(h, T);
  q[0] += u[0] * h.cp * (h.Ts - T[0]);
  q[1] += u[1] * h.cp * (h.Ts - T[1]);
  return q.cwiseQuotient(h.capacitances());
}

double hvac_mixed_potential(const HvacParams& h, const Eigen::Vector4d& T) {
  auto sq = [](double a) { return a * a; };
  return sq(T[2] - T[0]) / (2 * h.R31) + sq(T[3] - T[1]) / (2 * h.R42) + sq(T[2] - T[3]) / (2 * h.R34) +
         sq(h.Tinf - T[0]) / (2 * h.R10) + sq(h.Tinf - T[1]) / (2 * h.R20);
}

PseudoGradientSystem hvac_bm_system(const HvacParams& h) {
  PseudoGradientSystem sys;
  sys.n = 4;
  sys.m = 2;
  sys.Q = [h](const Vec&) { return Mat(-Mat(h.capacitances().asDiagonal())); };
  sys.P = [h](const Vec& x) { return hvac_mixed_potential(h, x); };
  sys.gradP = [h](const Vec& x) { return Vec(-hvac_conduction(h, x)); };
  sys.hessP = [h](const Vec&) { return Mat(-hvac_conduction_jacobian(h)); };
  sys.G = [h](const Vec& x) {
    Mat G = Mat::Zero(4, 2);
    G(0, 0) = -h.cp * (h.Ts - x[0]);
    G(1, 1) = -h.cp * (h.Ts - x[1]);
    return G;
  };
  return sys;
}

HvacEquilibrium hvac_equilibrium(const HvacParams& h, double T1_star, double T2_star) {
  h.validate();
  require_off_supply(h, T1_star, "T1*");
  require_off_supply(h, T2_star, "T2*");
  Eigen::Matrix2d W;
  W << 1.0 / h.R31 + 1.0 / h.R34, -1.0 / h.R34, -1.0 / h.R34, 1.0 / h.R42 + 1.0 / h.R34;
  const Eigen::Vector2d walls = W.lu().solve(Eigen::Vector2d(T1_star / h.R31, T2_star / h.R42));
  HvacEquilibrium eq;
  eq.T << T1_star, T2_star, walls[0], walls[1];
  const Eigen::Vector4d q = hvac_conduction(h, eq.T);
  eq.u[0] = -q[0] / (h.cp * (h.Ts - T1_star));
  eq.u[1] = -q[1] / (h.cp * (h.Ts - T2_star));
  return eq;
}

Eigen::Vector2d hvac_gamma(const HvacParams& h, const Eigen::Vector4d& T) {
  return {-0.5 * h.cp * (h.Ts - T[0]) * (h.Ts - T[0]), -0.5 * h.cp * (h.Ts - T[1]) * (h.Ts - T[1])};
}

namespace {

void check_shaping_gains(const HvacShapingGains& g) {
  require_positive(g.k, "k");
  require_positive(g.k1, "k1");
  require_positive(g.k2, "k2");
  if (g.alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
}

// a = -k k_I^{-1} u* - Gamma(x*)
Eigen::Vector2d shaping_offset(const HvacParams& h, const HvacEquilibrium& target, const HvacShapingGains& g) {
  const Eigen::Vector2d gs = hvac_gamma(h, target.T);
  return {-g.k / g.k1 * target.u[0] - gs[0], -g.k / g.k2 * target.u[1] - gs[1]};
}

}  // namespace

Eigen::Vector2d hvac_power_shaping(const HvacParams& h, const Eigen::Vector4d& T,
                                   const Eigen::Vector4d& Tdot, const HvacEquilibrium& target,
                                   const HvacShapingGains& gains) {
  check_shaping_gains(gains);
  require_off_supply(h, T[0], "T1");
  require_off_supply(h, T[1], "T2");
  const Eigen::Vector2d a = shaping_offset(h, target, gains);
  const Eigen::Vector2d gam = hvac_gamma(h, T);
  const double kk[2] = {gains.k1, gains.k2};
  Eigen::Vector2d u;
  for (int i = 0; i < 2; ++i)
    u[i] = -gains.alpha / gains.k * h.cp * (h.Ts - T[i]) * Tdot[i] - kk[i] / gains.k * (gam[i] + a[i]);
  return u;
}

double hvac_shaping_potential(const HvacParams& h, const Eigen::Vector4d& T,
                              const HvacEquilibrium& target, const HvacShapingGains& gains) {
  const Eigen::Vector2d a = shaping_offset(h, target, gains);
  const Eigen::Vector2d e = hvac_gamma(h, T) + a;
  return gains.k * hvac_mixed_potential(h, T) + 0.5 * (gains.k1 * e[0] * e[0] + gains.k2 * e[1] * e[1]);
}

Eigen::Vector2d hvac_shaping_closed_loop_input(const HvacParams& h, const Eigen::Vector4d& T,
                                               const HvacEquilibrium& target,
                                               const HvacShapingGains& gains) {
  check_shaping_gains(gains);
  const Eigen::Vector2d a = shaping_offset(h, target, gains);
  const Eigen::Vector2d gam = hvac_gamma(h, T);
  const Eigen::Vector4d w = hvac_conduction(h, T);
  const Eigen::Vector4d Cap = h.capacitances();
  const double kk[2] = {gains.k1, gains.k2};
  const double c = gains.alpha / gains.k;
  Eigen::Vector2d u;
  for (int i = 0; i < 2; ++i) {
    const double b = h.cp * (h.Ts - T[i]);
    const double r = -kk[i] / gains.k * (gam[i] + a[i]);
    const double Tdot = (w[i] + b * r) / (Cap[i] + c * b * b);
    u[i] = -c * b * Tdot + r;
  }
  return u;
}

ClosedLoopRun simulate_hvac_shaping(const HvacParams& h, const HvacEquilibrium& target,
                                    const HvacShapingGains& gains, const Eigen::Vector4d& T0,
                                    const IntegratorConfig& cfg) {
  h.validate();
  check_shaping_gains(gains);
  auto rhs = [&](double, const Vec& x) {
    const Eigen::Vector4d T = x;
    return Vec(hvac_rhs(h, T, hvac_shaping_closed_loop_input(h, T, target, gains)));
  };
  Trajectory traj = integrate(rhs, T0, cfg);
  std::vector<double> lyap;
  for (const auto& x : traj.states) lyap.push_back(hvac_shaping_potential(h, x, target, gains));
  return finish_monotone(std::move(traj), std::move(lyap), {"T1", "T2", "T3", "T4"});
}

// ------------------------------------------------------- dynamic state feedback

namespace {

const std::pair<Vec, Vec>& gauss_legendre_01() {
  // Golub-Welsch on the Legendre Jacobi matrix, mapped to [0, 1].
  static const std::pair<Vec, Vec> rule = [] {
    const int N = 16;
    Mat J = Mat::Zero(N, N);
    for (int k = 1; k < N; ++k) {
      const double b = k / std::sqrt(4.0 * k * k - 1.0);
      J(k, k - 1) = J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(J);
    Vec nodes = 0.5 * (es.eigenvalues().array() + 1.0);
    Vec weights = es.eigenvectors().row(0).array().square();  // sums to 1 on [0, 1]
    return std::make_pair(nodes, weights);
  }();
  return rule;
}

Mat g_dot(const DynFeedbackSystem& sys, const Vec& x, const Vec& xdot) {
  const auto J = sys.g_jacobians(x);
  Mat gd(sys.n, sys.m);
  for (int k = 0; k < sys.m; ++k) gd.col(k) = J[static_cast<std::size_t>(k)] * xdot;
  return gd;
}

}  // namespace

Mat left_annihilator(const Mat& g) {
  const auto n = g.rows();
  Eigen::JacobiSVD<Mat> svd(g.transpose(), Eigen::ComputeFullV);
  const auto rank = svd.rank();
  return svd.matrixV().rightCols(n - rank).transpose();
}

AssumptionReport check_assumptions(const DynFeedbackSystem& sys, const std::vector<Vec>& samples) {
  AssumptionReport rep;
  for (const Vec& x : samples) {
    const Mat J = sys.f_jacobian(x);
    const Mat S = sys.M * J + J.transpose() * sys.M;
    rep.a1_max_eig = std::max(rep.a1_max_eig, -min_eig(-S));
    const Mat g = sys.g(x);
    const Mat gp = left_annihilator(g);
    const auto Jg = sys.g_jacobians(x);
    if (gp.rows() > 0) rep.a2_residual = std::max(rep.a2_residual, (gp * g).lpNorm<Eigen::Infinity>());
    for (const Mat& Jk : Jg) {
      if (gp.rows() > 0) rep.a2_residual = std::max(rep.a2_residual, (gp * Jk).lpNorm<Eigen::Infinity>());
      const Mat MJ = sys.M * Jk;
      rep.a3_asymmetry = std::max(rep.a3_asymmetry, (MJ - MJ.transpose()).lpNorm<Eigen::Infinity>());
    }
  }
  return rep;
}

Mat dyn_feedback_alpha(const DynFeedbackSystem& sys, const Vec& x, const Vec& xdot) {
  const Mat g = sys.g(x);
  Eigen::ColPivHouseholderQR<Mat> qr(g);
  if (qr.rank() < sys.m) throw std::domain_error("input matrix g(x) is rank deficient");
  const Mat gtg = g.transpose() * g;
  return -gtg.ldlt().solve(g.transpose() * g_dot(sys, x, xdot));
}

DynFeedbackRates dyn_feedback_rhs(const DynFeedbackSystem& sys, const Vec& aug, const Vec& vdot) {
  if (aug.size() != sys.n + sys.m || vdot.size() != sys.m)
    throw std::invalid_argument("dyn_feedback_rhs: dimension mismatch");
  const Vec x = aug.head(sys.n);
  const Vec u = aug.tail(sys.m);
  DynFeedbackRates r;
  const Mat g = sys.g(x);
  r.xdot = sys.f(x) + g * u;
  r.y = g.transpose() * (sys.M * r.xdot);
  r.udot = dyn_feedback_alpha(sys, x, r.xdot) * u - r.y + vdot;
  return r;
}

Vec gamma_difference(const DynFeedbackSystem& sys, const Vec& x, const Vec& x_ref) {
  if (sys.Gamma) return sys.Gamma(x) - sys.Gamma(x_ref);
  const auto& [nodes, weights] = gauss_legendre_01();
  const Vec d = x - x_ref;
  Vec acc = Vec::Zero(sys.m);
  for (Eigen::Index k = 0; k < nodes.size(); ++k)
    acc += weights[k] * ((sys.M * sys.g(x_ref + nodes[k] * d)).transpose() * d);
  return acc;
}

Vec dyn_feedback_control(const DynFeedbackSystem& sys, const Vec& x, const Vec& xdot,
                         const Vec& x_star, double k1, double kd, double ki) {
  require_positive(k1, "k1");
  require_positive(ki, "ki");
  if (kd < 0.0) throw std::invalid_argument("kd must be >= 0");
  if (!sys.Gamma) {
    const AssumptionReport rep = check_assumptions(sys, {x});
    if (rep.a3_asymmetry > 1e-8)
      throw std::domain_error("M g is not integrable at the current state and no closed-form Gamma was given");
  }
  const Vec y = sys.g(x).transpose() * (sys.M * xdot);
  return (-kd * y - ki * gamma_difference(sys, x, x_star)) / k1;
}

DynFeedbackSystem hvac_dyn_feedback_system(const HvacParams& h) {
  h.validate();
  DynFeedbackSystem sys;
  sys.n = 4;
  sys.m = 2;
  const Eigen::Vector4d Cap = h.capacitances();
  const Mat K = hvac_conduction_jacobian(h);
  sys.f = [h, Cap](const Vec& x) { return Vec(hvac_conduction(h, x).cwiseQuotient(Cap)); };
  sys.f_jacobian = [K, Cap](const Vec&) { return Mat(Cap.cwiseInverse().asDiagonal() * K); };
  sys.g = [h, Cap](const Vec& x) {
    Mat g = Mat::Zero(4, 2);
    g(0, 0) = h.cp * (h.Ts - x[0]) / Cap[0];
    g(1, 1) = h.cp * (h.Ts - x[1]) / Cap[1];
    return g;
  };
  sys.g_jacobians = [h, Cap](const Vec&) {
    std::vector<Mat> J(2, Mat::Zero(4, 4));
    J[0](0, 0) = -h.cp / Cap[0];
    J[1](1, 1) = -h.cp / Cap[1];
    return J;
  };
  sys.M = Cap.asDiagonal();
  sys.Gamma = [h](const Vec& x) { return Vec(hvac_gamma(h, x)); };
  return sys;
}

Eigen::Vector2d hvac_udot(const HvacParams& h, const Eigen::Vector4d& T, const Eigen::Vector4d& Tdot,
                          const Eigen::Vector2d& u, const Eigen::Vector2d& vdot) {
  Eigen::Vector2d out;
  for (int i = 0; i < 2; ++i) {
    require_off_supply(h, T[i], i == 0 ? "T1" : "T2");
    out[i] = (u[i] / (h.Ts - T[i]) - h.cp * (h.Ts - T[i])) * Tdot[i] + vdot[i];
  }
  return out;
}

Eigen::Vector2d hvac_control_port(const HvacParams& h, const Eigen::Vector4d& T,
                                  const Eigen::Vector4d& Tdot, double T1_star, double T2_star,
                                  double kd, double ki) {
  const double a[2] = {(T1_star - h.Ts) * (T1_star - h.Ts), (T2_star - h.Ts) * (T2_star - h.Ts)};
  Eigen::Vector2d out;
  for (int i = 0; i < 2; ++i) {
    const double d = h.Ts - T[i];
    out[i] = -kd * h.cp * d * Tdot[i] + 0.5 * ki * h.cp * (d * d - a[i]);
  }
  return out;
}

ClosedLoopRun simulate_dyn_feedback(const DynFeedbackSystem& sys, const Vec& x_star,
                                    const DynFeedbackGains& gains, const Vec& x0, const Vec& u0,
                                    const IntegratorConfig& cfg) {
  require_positive(gains.k1, "k1");
  require_positive(gains.ki, "ki");
  if (gains.kd < 0.0) throw std::invalid_argument("kd must be >= 0");
  const int n = sys.n, m = sys.m;
  auto rates = [&](const Vec& z) {
    const Vec x = z.head(n);
    const Vec xdot = sys.f(x) + sys.g(x) * z.tail(m);
    const Vec vdot = dyn_feedback_control(sys, x, xdot, x_star, gains.k1, gains.kd, gains.ki);
    return dyn_feedback_rhs(sys, z, vdot);
  };
  // The last component accumulates the supplied energy so the audit does not depend on
  // how finely the trajectory is recorded.
  Vec z0(n + m + 1);
  z0 << x0, u0, 0.0;
  Trajectory traj = integrate(
      [&](double, const Vec& z) {
        const auto r = rates(z.head(n + m));
        Vec out(n + m + 1);
        out << r.xdot, r.udot, -gains.kd * r.y.squaredNorm();
        return out;
      },
      z0, cfg);

  ClosedLoopRun run;
  std::vector<double> supplied;
  for (const auto& z : traj.states) {
    const auto r = rates(z.head(n + m));
    const Vec dg = gamma_difference(sys, z.head(n), x_star);
    run.lyapunov.push_back(0.5 * gains.k1 * r.xdot.dot(sys.M * r.xdot) + 0.5 * gains.ki * dg.squaredNorm());
    supplied.push_back(z[n + m]);
  }
  run.audit = dissipation_audit(traj.times, run.lyapunov, supplied);
  run.traj = std::move(traj);
  for (int k = 0; k < n; ++k) run.columns.push_back("x" + std::to_string(k));
  for (int k = 0; k < m; ++k) run.columns.push_back("u" + std::to_string(k));
  run.columns.push_back("supplied");
  return run;
}

ClosedLoopRun simulate_dyn_feedback_open(const DynFeedbackSystem& sys,
                                         const std::function<Vec(double)>& vdot, const Vec& x0,
                                         const Vec& u0, const IntegratorConfig& cfg) {
  const int n = sys.n, m = sys.m;
  Vec z0(n + m + 1);
  z0 << x0, u0, 0.0;
  Trajectory traj = integrate(
      [&](double t, const Vec& z) {
        const Vec vd = vdot(t);
        const auto r = dyn_feedback_rhs(sys, z.head(n + m), vd);
        Vec out(n + m + 1);
        out << r.xdot, r.udot, vd.dot(r.y);
        return out;
      },
      z0, cfg);
  ClosedLoopRun run;
  std::vector<double> supplied;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto r = dyn_feedback_rhs(sys, traj.states[k].head(n + m), vdot(traj.times[k]));
    run.lyapunov.push_back(0.5 * r.xdot.dot(sys.M * r.xdot));
    supplied.push_back(traj.states[k][n + m]);
  }
  run.audit = dissipation_audit(traj.times, run.lyapunov, supplied);
  run.traj = std::move(traj);
  for (int k = 0; k < n; ++k) run.columns.push_back("x" + std::to_string(k));
  for (int k = 0; k < m; ++k) run.columns.push_back("u" + std::to_string(k));
  run.columns.push_back("supplied");
  return run;
}

}  // namespace passiv
