#pragma once

#include "passiv/ode.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace passiv {

using MatrixOracle = std::function<Mat(const Vec& x)>;

// Q(x) xdot = gradP(x) + G(x) u
struct PseudoGradientSystem {
  int n = 0;
  int m = 0;
  MatrixOracle Q;
  ScalarOracle P;
  VectorOracle gradP;
  MatrixOracle hessP;  // optional; finite differences of gradP when empty
  MatrixOracle G;

  bool has_analytic_hessian() const { return static_cast<bool>(hessP); }
  Mat hessian(const Vec& x) const;
  // Solves Q(x) xdot = gradP + G u; Q must be invertible at x.
  Vec velocity(const Vec& x, const Vec& u) const;
};

struct ConsistencyReport {
  double max_gradient_rel_error = 0.0;
  double max_hessian_asymmetry = 0.0;
  bool dimensions_ok = true;
  std::string hessian_source;  // "analytic" or "finite-difference"

  bool ok(double grad_tol = 1e-5, double sym_tol = 1e-10) const {
    return dimensions_ok && max_gradient_rel_error <= grad_tol && max_hessian_asymmetry <= sym_tol;
  }
};

ConsistencyReport check_system(const PseudoGradientSystem& sys, const std::vector<Vec>& samples);

struct MixedPotentialRate {
  double value = 0.0;
  Vec y;
};

// Pdot = xdot' Q xdot + u' y with y = -G' xdot.
MixedPotentialRate mixed_potential_rate(const PseudoGradientSystem& sys, const Vec& x,
                                        const Vec& xdot, const Vec& u);

struct SamplePoint {
  Vec x;
  Vec u;
};

struct AdmissiblePair {
  double lambda = 1.0;
  Mat M;
  ScalarOracle tildeP;
  VectorOracle grad_tildeP;
  MatrixOracle tildeQ;
  MatrixOracle tildeG;
  double max_residual = 0.0;  // of tildeQ xdot - grad tildeP - tildeG u over the samples
};

AdmissiblePair admissible_pair(const PseudoGradientSystem& sys, double lambda, const Mat& M,
                               const std::vector<SamplePoint>& samples = {});

struct DefinitenessResult {
  bool ok = false;
  double max_eigenvalue = 0.0;
};

DefinitenessResult neg_semidefinite_symmetric_part(const Mat& A, double tol = 1e-10);

struct Box {
  Vec lo;
  Vec hi;
};

struct BoxCoverageReport {
  bool ok = true;
  std::size_t samples = 0;
  double worst_max_eigenvalue = -std::numeric_limits<double>::infinity();
  Vec worst_point;
};

// Pointwise check of the symmetric part of A(x) on a grid plus uniform random points.
// Evidence only, not a proof.
BoxCoverageReport check_nsd_on_box(const MatrixOracle& A, const Box& box, int grid_per_dim,
                                   int random_points, std::uint64_t seed, double tol = 1e-10);

// 1/2 xdot' M xdot; M must be symmetric positive definite.
double krasovskii_storage(const Mat& M, const Vec& xdot);

struct SwitchEvent {
  double time = 0.0;
  double jump = 0.0;
  int entered = 0;  // indices joining the active projection set
  int left = 0;     // indices leaving it
};

struct StorageTrace {
  std::vector<double> times;
  std::vector<double> storage;
  std::vector<double> supply_integral;
  std::vector<double> margin;  // (supply - S) minus its running max; <= 0
  std::vector<SwitchEvent> switch_events;
};

struct AuditReport {
  bool pass = true;
  double min_margin = 0.0;
  double worst_time = 0.0;
  double audit_tol = 0.0;
};

struct AuditResult {
  StorageTrace trace;
  AuditReport report;
};

using SampleScalar = std::function<double(double t, const Vec& x)>;
using SampleVector = std::function<Vec(double t, const Vec& x)>;

double default_audit_tol(const std::vector<double>& storage);

// Dissipation inequality S(tj) - S(ti) <= int_ti^tj u'y dt + tol for all i <= j.
// A negative audit_tol selects default_audit_tol.
AuditResult passivity_audit(const Trajectory& traj, const SampleScalar& storage,
                            const SampleVector& port_u, const SampleVector& port_y,
                            double audit_tol = -1.0);

// Same check with the supplied energy already integrated (e.g. carried as an extra state).
AuditResult dissipation_audit(const std::vector<double>& times, const std::vector<double>& storage,
                              const std::vector<double>& supply_integral, double audit_tol = -1.0);
// Same check on precomputed series; supply_rate is integrated with the trapezoidal rule, so
// the samples must resolve the supply rate.
AuditResult passivity_audit_series(const std::vector<double>& times,
                                   const std::vector<double>& storage,
                                   const std::vector<double>& supply_rate, double audit_tol = -1.0);

// Non-increase of a Lyapunov function (zero supply).
AuditResult monotone_audit(const std::vector<double>& times, const std::vector<double>& values,
                           double audit_tol = -1.0);

void write_storage_csv(const StorageTrace& trace, const std::filesystem::path& path);
void write_audit_json(const AuditReport& report, const std::filesystem::path& path);

}  // namespace passiv
