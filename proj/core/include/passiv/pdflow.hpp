#pragma once

#include "passiv/bm.hpp"
#include "passiv/ode.hpp"

#include <map>
#include <string>
#include <vector>

namespace passiv {

struct ScalarFunction {
  ScalarOracle value;
  VectorOracle gradient;
  MatrixOracle hessian;
};

// 1/2 x'Qx + c'x + c0
ScalarFunction quadratic_function(const Mat& Q, const Vec& c, double c0 = 0.0);
// a'x - b
ScalarFunction affine_function(const Vec& a, double b);

// minimize f(x) s.t. Ax = b, g_i(x) <= 0
struct ConvexProblem {
  int n = 0;
  ScalarFunction f;
  Mat A;  // m x n, possibly 0 x n
  Vec b;
  std::vector<ScalarFunction> g;
  VectorOracle g_values;  // optional batched evaluation of all g_i

  int m() const { return static_cast<int>(A.rows()); }
  int p() const { return static_cast<int>(g.size()); }
  Vec gvals(const Vec& x) const;
  // Throws std::invalid_argument on inconsistent dimensions.
  void validate() const;
};

struct ProblemCheck {
  double min_f_hessian_eig = std::numeric_limits<double>::infinity();
  double min_g_hessian_eig = std::numeric_limits<double>::infinity();
  double affine_error = 0.0;
  std::size_t samples = 0;

  bool ok(double tol = 1e-10) const {
    return min_f_hessian_eig > 0.0 && min_g_hessian_eig >= -tol && affine_error <= tol;
  }
};

ProblemCheck check_problem(const ConvexProblem& prob, const std::vector<Vec>& samples);

using InequalityParams = std::map<std::string, std::vector<double>>;
using InequalityFactory = std::function<ScalarFunction(int n, const InequalityParams& params)>;

// Built in: "ball" (center, radius): |x-c|^2 - r^2; "quadratic" (P row-major, q, r):
// 1/2 x'Px + q'x + r.
void register_inequality(const std::string& name, InequalityFactory factory);
ScalarFunction make_inequality(const std::string& name, int n, const InequalityParams& params);
std::vector<std::string> registered_inequalities();

struct FlowState {
  Vec x;
  Vec lam;
  Vec mu;

  Vec pack() const;
  static FlowState unpack(const Vec& z, int n, int m, int p);
};

struct FlowRates {
  Vec dx;
  Vec dlam;
  Vec dmu;

  Vec pack() const;
  double inf_norm() const;
};

struct TimeConstants {
  Vec tau_x;
  Vec tau_lam;
  Vec tau_mu;

  static TimeConstants ones(int n, int m, int p);
  void validate(int n, int m, int p) const;
};

struct KKTReport {
  double stationarity = 0.0;
  double eq_violation = 0.0;
  double ineq_violation = 0.0;
  double comp_slack = 0.0;
  double dual_feas = 0.0;

  bool optimal(double tol) const {
    return stationarity <= tol && eq_violation <= tol && ineq_violation <= tol &&
           comp_slack <= tol && dual_feas >= -tol;
  }
};

double lagrangian(const ConvexProblem& prob, const FlowState& s);
KKTReport kkt_residual(const ConvexProblem& prob, const FlowState& s);

struct EqualityFlowRates {
  Vec dx;
  Vec dlam;
  Vec y;
};

EqualityFlowRates equality_flow_rhs(const ConvexProblem& prob, const FlowState& s, const Vec& u,
                                    const TimeConstants& tc);

// g if mu > 0, max(0, g) if mu = 0.
double positive_projection(double gval, double mu);

// i in sigma iff |mu_i| <= tol and g_i < -tol (ties stay outside).
std::vector<int> active_set(const FlowState& s, const Vec& gvals, double tol = 1e-10);

FlowRates interconnected_rhs(const ConvexProblem& prob, const FlowState& s, const Vec& v,
                             const Vec& v_tilde, const TimeConstants& tc);

FlowRates damping_injection_rhs(const ConvexProblem& prob, const FlowState& s, double k,
                                const TimeConstants& tc);

// Rates of the switched system in mode sigma: dmu_i = 0 on sigma, g_i / tau_i elsewhere.
FlowRates rates_in_mode(const FlowRates& rates, const Vec& gvals, const std::vector<int>& sigma,
                        const TimeConstants& tc);

double switched_storage(const FlowRates& rates, const std::vector<int>& sigma,
                        const TimeConstants& tc);

struct SwitchAuditReport {
  bool pass = true;
  int activations = 0;
  int deactivations = 0;
  double max_activation_jump = -std::numeric_limits<double>::infinity();
  double max_deactivation_jump = 0.0;  // absolute value
  bool strict_decrease = true;         // every activation jump < 0
};

SwitchAuditReport storage_switch_audit(const StorageTrace& trace, double audit_tol = 1e-6);

using FlowRatesFn = std::function<FlowRates(const FlowState& s)>;

struct SolveOptions {
  double kkt_tol = 1e-6;
  // Replaces interconnected_rhs(v = v_tilde = 0), e.g. with a specialized implementation.
  FlowRatesFn rates;
};

struct SolveResult {
  Trajectory traj;
  KKTReport kkt;
  StorageTrace storage;
  FlowState final_state;
  bool converged = false;
  bool kkt_ok = false;
  int switch_count = 0;
  std::string diagnostics;
};

SolveResult solve(const ConvexProblem& prob, const FlowState& init, const TimeConstants& tc,
                  const IntegratorConfig& cfg, const SolveOptions& options = {});

}  // namespace passiv
