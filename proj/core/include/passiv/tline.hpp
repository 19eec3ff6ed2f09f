#pragma once

#include "passiv/bm.hpp"
#include "passiv/ode.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace passiv {

// Telegrapher's line on z in [0, 1]:
//   -L i_t = v_z + R i,  C v_t = -G v - i_z
// Source end: v0 = vC0 - R0 i0, C0 vC0' = I0 - i0.  Load end: v1 = R1 i1 + vC1, C1 vC1' = i1.
struct LineParams {
  double R = 1.0, L = 1.0, C = 1.0, G = 1.0;
  double R0 = 1.0, C0 = 1.0, R1 = 1.0, C1 = 1.0;

  // L, C and the boundary elements must be > 0; R and G may be 0 only if allow_lossless.
  void validate(bool allow_lossless = false) const;
  double omega() const;  // sqrt(RG)
};

struct CompatibilityReport {
  double m2_from_load = 0.0;  // C1 R1^2 / L
  double m2_from_line = 0.0;  // C1 / C
  double theta_load = 0.0;    // C1 R1
  double theta_source = 0.0;  // C0 R0
  bool ok = false;
};

CompatibilityReport boundary_compatibility(const LineParams& p, double tol = 1e-9);

struct LineState {
  Vec i;  // M + 1 nodes, z_k = k / M
  Vec v;
  double vC0 = 0.0;
  double vC1 = 0.0;

  int M() const { return static_cast<int>(i.size()) - 1; }
  Vec pack() const;
  static LineState unpack(const Vec& z, int M);
  static LineState zero(int M);
};

// Second-order spatial derivative on the collocated grid (one-sided at the ends).
Vec grid_derivative(const Vec& f, double dz);
// Trapezoidal integral over [0, 1].
double grid_integral(const Vec& f);

// End-node voltages from the boundary circuits.
void apply_boundary_closure(const LineParams& p, LineState& s);

LineState tline_rhs(const LineParams& p, const LineState& s, double I0);

// Largest step allowed by the CFL-style guard 0.9 dz sqrt(LC).
double max_stable_step(const LineParams& p, int M);
void check_step(const LineParams& p, int M, double step);

struct LineEquilibrium {
  LineState state;
  double I0_star = 0.0;
  double i0_star = 0.0;
  double vC0_star = 0.0;
  double vC1_star = 0.0;
};

LineEquilibrium tline_equilibrium(const LineParams& p, double vC1_star, int M = 100);

struct DissipationReport {
  double supply = 0.0;       // I0* vC0*
  double dissipation = 0.0;  // int (R i*^2 + G v*^2) dz + R0 i0*^2, trapezoidal
  double relative_mismatch = 0.0;
};

DissipationReport dissipation_obstacle_report(const LineParams& p, double vC1_star, int M = 100);

struct AdmissibleLineParams {
  double tau = 0.0;
  double zeta = 0.0;
  double lambda_prime = 0.0;
  double lambda = 0.0;  // lambda_prime * beta
  double alpha = 0.0;
  double beta = 0.0;
  double m2 = 0.0;
  double theta = 0.0;
  double feasible_upper = 0.0;  // right end of the lambda' interval

  // 0 <= lambda' <= tau (1 - zeta^2)
  bool first_condition() const;
  // (lambda' - tau)(lambda' + 1) + ((tau + 1)^2 / 4) zeta^2 <= 0
  bool second_condition() const;
  // zeta^2 <= 4 tau / (1 + tau)^2
  bool zeta_bound() const;
  // Whether lambda = 1 (used by the closed-loop functional) lies in the feasible set.
  bool unit_lambda_feasible() const;
};

AdmissibleLineParams admissible_params_search(const LineParams& p);

struct LineTargets {
  double i0_star = 0.0;
  double vC0_star = 0.0;
};

// I0 = i0* - K_P vC0' - K_I (vC0 - vC0*)
double boundary_pi_control(const LineParams& p, const LineState& s, const LineTargets& targets,
                           double K_P, double K_I, double vC0_dot);
// Same law with vC0' = (I0 - i0) / C0 substituted and solved for I0.
double boundary_pi_closed_loop_input(const LineParams& p, const LineState& s,
                                     const LineTargets& targets, double K_P, double K_I);

double closed_loop_lyapunov(const LineParams& p, const LineState& s, const LineEquilibrium& eq,
                            const AdmissibleLineParams& adm, double K_I);
// Squared distance norm to the equilibrium.
double line_distance_norm(const LineParams& p, const LineState& s, const LineEquilibrium& eq);

// 1/2 int (L i^2 + C v^2) dz + 1/2 C0 vC0^2 + 1/2 C1 vC1^2
double line_energy(const LineParams& p, const LineState& s);

struct ConservationReport {
  bool lossless = true;
  double max_residual_current = 0.0;  // lossless: d/dt int i - (v(0) - v(1)) / L
  double max_residual_voltage = 0.0;  // lossless: d/dt int v - (i(0) - i(1)) / C
  double max_residual_lossy = 0.0;    // lossy weighted functional balance
  double max_flux = 0.0;              // scale of the boundary terms
};

// Time derivatives from central differences of the recorded samples.
ConservationReport conservation_check(const LineParams& p, const Trajectory& traj, int M);

struct LineRun {
  Trajectory traj;
  std::vector<double> lyapunov;
  AuditResult audit;
  LineEquilibrium eq;
  AdmissibleLineParams adm;
};

// Open loop with constant I0.
Trajectory simulate_line_open(const LineParams& p, const LineState& s0, double I0,
                              const IntegratorConfig& cfg);
// Boundary PI closed loop starting from s0; Lyapunov trace is closed_loop_lyapunov.
LineRun simulate_line_pi(const LineParams& p, double vC1_star, double K_P, double K_I,
                         const LineState& s0, const IntegratorConfig& cfg);

// One row per sample: t, i_0..i_M, v_0..v_M, vC0, vC1.
void write_space_time_csv(const Trajectory& traj, int M, const std::filesystem::path& path);

}  // namespace passiv
