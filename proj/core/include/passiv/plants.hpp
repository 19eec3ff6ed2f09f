#pragma once

#include "passiv/bm.hpp"
#include "passiv/ode.hpp"
#include "passiv/pdflow.hpp"

#include <string>
#include <vector>

namespace passiv {

// ---------------------------------------------------------------- parallel RLC
// -L di/dt = R i + v - Vs,  C dv/dt = i - G v

struct ParallelRLC {
  double R = 1.0, G = 1.0, L = 1.0, C = 1.0;
  void validate() const;
  // G^2 L >= C: the shaped pair has a negative semidefinite symmetric part.
  bool shaping_certificate() const { return G * G * L >= C; }
};

Eigen::Vector2d prlc_rhs(const ParallelRLC& p, const Eigen::Vector2d& state, double Vs);
PseudoGradientSystem prlc_bm_system(const ParallelRLC& p);

struct PrlcEquilibrium {
  double i_star = 0.0;
  double Vs_star = 0.0;
};
PrlcEquilibrium prlc_equilibrium(const ParallelRLC& p, double v_star);

// M of the shaping pair with lambda = 1.
Mat prlc_admissible_M(const ParallelRLC& p);

struct PowerShapingOutput {
  double Vs = 0.0;
  double Pd = 0.0;
  bool certificate = false;
};

// Vs = -K (i - i*) + (R + 1/G) i*
PowerShapingOutput prlc_power_shaping(const ParallelRLC& p, const Eigen::Vector2d& state,
                                      double i_star, double K);
// (1/2G)(G v - i)^2 + 1/2 (R + 1/G + K)(i - i*)^2
double prlc_shaped_potential(const ParallelRLC& p, const Eigen::Vector2d& state, double i_star,
                             double K);

struct PiOutput {
  double Vs = 0.0;
  double ctrl_rate = 0.0;
};

// Vs = -K_P (i - i*) - K_I xi + R i* + v*,  xi' = i - i*
PiOutput prlc_krasovskii_pi(const ParallelRLC& p, const Eigen::Vector2d& state, double ctrl_state,
                            double i_star, double v_star, double K_P, double K_I);

struct ClosedLoopRun {
  Trajectory traj;
  std::vector<double> lyapunov;  // per sample
  AuditResult audit;
  std::vector<std::string> columns;
  std::vector<std::string> warnings;
};

ClosedLoopRun simulate_prlc_power_shaping(const ParallelRLC& p, double v_star, double K,
                                          const Eigen::Vector2d& x0, const IntegratorConfig& cfg);
// Lyapunov trace: 1/2 L i_t^2 + 1/2 C v_t^2 + 1/2 K_I (i - i*)^2. State (i, v, xi).
ClosedLoopRun simulate_prlc_pi(const ParallelRLC& p, double v_star, double K_P, double K_I,
                               const Eigen::Vector2d& x0, const IntegratorConfig& cfg);

// --------------------------------------------------------------- complete RLC
// P(i, v) = i' Gamma v + G(i) - J(v)
// -L di/dt = grad_i P - Bs Vs,  C dv/dt = grad_v P

struct CompleteRLC {
  Mat L;
  Mat C;
  Mat Gamma;  // nL x nC
  ScalarFunction content;
  ScalarFunction cocontent;
  Mat Bs;  // nL x nE

  int nL() const { return static_cast<int>(L.rows()); }
  int nC() const { return static_cast<int>(C.rows()); }
  int nE() const { return static_cast<int>(Bs.cols()); }
  void validate() const;
  double mixed_potential(const Vec& i, const Vec& v) const;
};

// State stacked as (i, v).
Vec complete_rlc_rhs(const CompleteRLC& c, const Vec& state, const Vec& Vs);
// 1/2 i_t' L i_t + 1/2 v_t' C v_t
double complete_rlc_storage(const CompleteRLC& c, const Vec& rates);
// Most negative eigenvalue of the content/cocontent Hessians at the state.
double complete_rlc_min_curvature(const CompleteRLC& c, const Vec& state);

// ---------------------------------------------------------------------- HVAC

struct HvacParams {
  double C1 = 10.0, C2 = 10.0, C3 = 40.0, C4 = 40.0;
  double R31 = 5.0, R42 = 5.0, R34 = 5.0, R10 = 5.0, R20 = 5.0;
  double cp = 1.0;
  double Ts = 10.0;
  double Tinf = 30.0;

  void validate() const;
  Eigen::Vector4d capacitances() const { return {C1, C2, C3, C4}; }
};

Eigen::Vector4d hvac_rhs(const HvacParams& h, const Eigen::Vector4d& T, const Eigen::Vector2d& u);
double hvac_mixed_potential(const HvacParams& h, const Eigen::Vector4d& T);
PseudoGradientSystem hvac_bm_system(const HvacParams& h);

struct HvacEquilibrium {
  Eigen::Vector4d T;
  Eigen::Vector2d u;
};
// Wall temperatures from the zone targets, then the flows that hold them.
HvacEquilibrium hvac_equilibrium(const HvacParams& h, double T1_star, double T2_star);

// Gamma_i = -(cp/2)(Ts - T_i)^2 for the two zones.
Eigen::Vector2d hvac_gamma(const HvacParams& h, const Eigen::Vector4d& T);

struct HvacShapingGains {
  double k = 1.0;
  double k1 = 10.0;
  double k2 = 10.0;
  double alpha = 0.5;
};

// u_i = -(alpha/k) cp (Ts - T_i) Tdot_i - (k_i/k)(Gamma_i + a_i)
Eigen::Vector2d hvac_power_shaping(const HvacParams& h, const Eigen::Vector4d& T,
                                   const Eigen::Vector4d& Tdot, const HvacEquilibrium& target,
                                   const HvacShapingGains& gains);
// k P + 1/2 sum k_i (Gamma_i + a_i)^2
double hvac_shaping_potential(const HvacParams& h, const Eigen::Vector4d& T,
                              const HvacEquilibrium& target, const HvacShapingGains& gains);
// The shaping law depends on Tdot, which depends on u; solves that loop exactly.
Eigen::Vector2d hvac_shaping_closed_loop_input(const HvacParams& h, const Eigen::Vector4d& T,
                                               const HvacEquilibrium& target,
                                               const HvacShapingGains& gains);

ClosedLoopRun simulate_hvac_shaping(const HvacParams& h, const HvacEquilibrium& target,
                                    const HvacShapingGains& gains, const Eigen::Vector4d& T0,
                                    const IntegratorConfig& cfg);

// ------------------------------------------------------- dynamic state feedback
// xdot = f(x) + g(x) u

struct DynFeedbackSystem {
  int n = 0;
  int m = 0;
  VectorOracle f;
  MatrixOracle f_jacobian;
  MatrixOracle g;                                   // n x m
  std::function<std::vector<Mat>(const Vec&)> g_jacobians;  // column k: d g_k / dx (n x n)
  Mat M;                                            // contraction metric
  VectorOracle Gamma;                               // optional closed form of the integral of M g
};

struct AssumptionReport {
  double a1_max_eig = -std::numeric_limits<double>::infinity();  // M df + df' M
  double a2_residual = 0.0;                                      // |g_perp dg_k/dx|
  double a3_asymmetry = 0.0;                                     // d(Mg)_k/dx symmetric
  bool ok(double tol = 1e-8) const { return a1_max_eig < 0.0 && a2_residual <= tol && a3_asymmetry <= tol; }
};

AssumptionReport check_assumptions(const DynFeedbackSystem& sys, const std::vector<Vec>& samples);

// Orthonormal rows spanning the left null space of g.
Mat left_annihilator(const Mat& g);

// alpha = -(g'g)^{-1} g' gdot, gdot = sum_k (dg/dx_k) xdot_k
Mat dyn_feedback_alpha(const DynFeedbackSystem& sys, const Vec& x, const Vec& xdot);

struct DynFeedbackRates {
  Vec xdot;
  Vec udot;
  Vec y;
};

// aug = (x, u); udot = alpha u + beta + vdot with beta = -g'M xdot, y = g'M xdot
DynFeedbackRates dyn_feedback_rhs(const DynFeedbackSystem& sys, const Vec& aug, const Vec& vdot);

// Gamma(x) - Gamma(x_ref): closed form when available, else a line integral of (Mg)' along
// the straight segment (Gauss-Legendre, 16 nodes).
Vec gamma_difference(const DynFeedbackSystem& sys, const Vec& x, const Vec& x_ref);

// vdot = (1/k1)(-kd y - ki (Gamma(x) - Gamma(x*)))
Vec dyn_feedback_control(const DynFeedbackSystem& sys, const Vec& x, const Vec& xdot,
                         const Vec& x_star, double k1, double kd, double ki);

DynFeedbackSystem hvac_dyn_feedback_system(const HvacParams& h);

// Closed-form HVAC versions of the generic laws (zone indices 1, 2).
Eigen::Vector2d hvac_udot(const HvacParams& h, const Eigen::Vector4d& T, const Eigen::Vector4d& Tdot,
                          const Eigen::Vector2d& u, const Eigen::Vector2d& vdot);
Eigen::Vector2d hvac_control_port(const HvacParams& h, const Eigen::Vector4d& T,
                                  const Eigen::Vector4d& Tdot, double T1_star, double T2_star,
                                  double kd, double ki);

struct DynFeedbackGains {
  double k1 = 1.0;
  double kd = 1.0;
  double ki = 5.0;
};

// State (x, u, w); u starts at u0 and w accumulates the supply -kd |y|^2.
// Lyapunov trace 1/2 k1 xdot'M xdot + 1/2 ki |Gamma - Gamma*|^2.
ClosedLoopRun simulate_dyn_feedback(const DynFeedbackSystem& sys, const Vec& x_star,
                                    const DynFeedbackGains& gains, const Vec& x0, const Vec& u0,
                                    const IntegratorConfig& cfg);

// Open loop of the augmented system under an external vdot(t); storage 1/2 xdot'M xdot with
// ports (vdot, y). State (x, u, w) with w the supplied energy.
ClosedLoopRun simulate_dyn_feedback_open(const DynFeedbackSystem& sys,
                                         const std::function<Vec(double)>& vdot, const Vec& x0,
                                         const Vec& u0, const IntegratorConfig& cfg);

}  // namespace passiv
