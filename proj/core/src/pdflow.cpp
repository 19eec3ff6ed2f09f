#include "passiv/pdflow.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>
#include <sstream>

#include "passiv/csv.hpp"

namespace passiv {

ScalarFunction quadratic_function(const Mat& Q, const Vec& c, double c0) {
  if (Q.rows() != Q.cols() || Q.rows() != c.size())
    throw std::invalid_argument("quadratic_function: Q must be n x n and c length n");
  const Mat Qs = 0.5 * (Q + Q.transpose());
  return {
      [Qs, c, c0](const Vec& x) { return 0.5 * x.dot(Qs * x) + c.dot(x) + c0; },
      [Qs, c](const Vec& x) { return Vec(Qs * x + c); },
      [Qs](const Vec&) { return Qs; },
  };
}

ScalarFunction affine_function(const Vec& a, double b) {
  const auto n = a.size();
  return {
      [a, b](const Vec& x) { return a.dot(x) - b; },
      [a](const Vec&) { return a; },
      [n](const Vec&) { return Mat(Mat::Zero(n, n)); },
  };
}

Vec ConvexProblem::gvals(const Vec& x) const {
  if (g_values) return g_values(x);
  Vec out(p());
  for (int i = 0; i < p(); ++i) out[i] = g[static_cast<std::size_t>(i)].value(x);
  return out;
}

void ConvexProblem::validate() const {
  if (n <= 0) throw std::invalid_argument("problem.n must be > 0");
  if (!f.value || !f.gradient || !f.hessian)
    throw std::invalid_argument("problem.objective needs value, gradient and hessian");
  if (A.cols() != n && A.rows() > 0)
    throw std::invalid_argument("problem.equalities.A must have n columns");
  if (A.rows() != b.size())
    throw std::invalid_argument("problem.equalities.b must have one entry per row of A");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!g[i].value || !g[i].gradient || !g[i].hessian)
      throw std::invalid_argument("problem.inequalities[" + std::to_string(i) +
                                  "] needs value, gradient and hessian");
}

ProblemCheck check_problem(const ConvexProblem& prob, const std::vector<Vec>& samples) {
  ProblemCheck rep;
  auto min_eig = [](const Mat& H) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  };
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const Vec& x = samples[k];
    ++rep.samples;
    rep.min_f_hessian_eig = std::min(rep.min_f_hessian_eig, min_eig(prob.f.hessian(x)));
    for (const auto& gi : prob.g) rep.min_g_hessian_eig = std::min(rep.min_g_hessian_eig, min_eig(gi.hessian(x)));
    if (prob.m() > 0) {
      const Vec d = samples[(k + 1) % samples.size()] - x;
      const Vec lhs = (prob.A * (x + d) - prob.b) - (prob.A * x - prob.b);
      rep.affine_error = std::max(rep.affine_error, (lhs - prob.A * d).lpNorm<Eigen::Infinity>());
    }
  }
  return rep;
}

namespace {

struct Registry {
  std::mutex lock;
  std::map<std::string, InequalityFactory> entries;
};

const std::vector<double>& param(const InequalityParams& params, const std::string& key,
                                 std::size_t size, const std::string& name) {
  auto it = params.find(key);
  if (it == params.end()) throw std::invalid_argument(name + ": missing parameter '" + key + "'");
  if (it->second.size() != size)
    throw std::invalid_argument(name + ": parameter '" + key + "' must have " +
                                std::to_string(size) + " entries");
  return it->second;
}

std::map<std::string, InequalityFactory> builtin_inequalities() {
  std::map<std::string, InequalityFactory> entries;
  entries["ball"] = [](int n, const InequalityParams& params) {
    const auto& c = param(params, "center", static_cast<std::size_t>(n), "ball");
    const double r = param(params, "radius", 1, "ball")[0];
    if (!(r > 0)) throw std::invalid_argument("ball: radius must be > 0");
    const Vec center = Eigen::Map<const Vec>(c.data(), n);
    return ScalarFunction{
        [center, r](const Vec& x) { return (x - center).squaredNorm() - r * r; },
        [center](const Vec& x) { return Vec(2.0 * (x - center)); },
        [n](const Vec&) { return Mat(2.0 * Mat::Identity(n, n)); },
    };
  };
  entries["quadratic"] = [](int n, const InequalityParams& params) {
    const auto& P = param(params, "P", static_cast<std::size_t>(n * n), "quadratic");
    const auto& q = param(params, "q", static_cast<std::size_t>(n), "quadratic");
    const double r = param(params, "r", 1, "quadratic")[0];
    const Mat Pm = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(P.data(), n, n);
    return quadratic_function(Pm, Eigen::Map<const Vec>(q.data(), n), r);
  };
  return entries;
}

Registry& registry() {
  static Registry r{{}, builtin_inequalities()};
  return r;
}

double projection_in_rhs(double g, double mu) { return mu > 0.0 ? g : std::max(0.0, g); }

}  // namespace

void register_inequality(const std::string& name, InequalityFactory factory) {
  auto& r = registry();
  std::lock_guard<std::mutex> guard(r.lock);
  r.entries[name] = std::move(factory);
}

ScalarFunction make_inequality(const std::string& name, int n, const InequalityParams& params) {
  auto& r = registry();
  InequalityFactory factory;
  {
    std::lock_guard<std::mutex> guard(r.lock);
    auto it = r.entries.find(name);
    if (it == r.entries.end()) throw std::invalid_argument("unknown inequality '" + name + "'");
    factory = it->second;
  }
  return factory(n, params);
}

std::vector<std::string> registered_inequalities() {
  auto& r = registry();
  std::lock_guard<std::mutex> guard(r.lock);
  std::vector<std::string> names;
  for (const auto& [k, v] : r.entries) names.push_back(k);
  return names;
}

Vec FlowState::pack() const {
  Vec z(x.size() + lam.size() + mu.size());
  z << x, lam, mu;
  return z;
}

FlowState FlowState::unpack(const Vec& z, int n, int m, int p) {
  if (z.size() != n + m + p) throw std::invalid_argument("FlowState::unpack: size mismatch");
  return {z.head(n), z.segment(n, m), z.tail(p)};
}

Vec FlowRates::pack() const {
  Vec z(dx.size() + dlam.size() + dmu.size());
  z << dx, dlam, dmu;
  return z;
}

double FlowRates::inf_norm() const {
  double r = 0.0;
  if (dx.size()) r = std::max(r, dx.lpNorm<Eigen::Infinity>());
  if (dlam.size()) r = std::max(r, dlam.lpNorm<Eigen::Infinity>());
  if (dmu.size()) r = std::max(r, dmu.lpNorm<Eigen::Infinity>());
  return r;
}

TimeConstants TimeConstants::ones(int n, int m, int p) {
  return {Vec::Ones(n), Vec::Ones(m), Vec::Ones(p)};
}

void TimeConstants::validate(int n, int m, int p) const {
  if (tau_x.size() != n || tau_lam.size() != m || tau_mu.size() != p)
    throw std::invalid_argument("time constants do not match problem dimensions");
  auto positive = [](const Vec& v, const char* name) {
    for (Eigen::Index k = 0; k < v.size(); ++k)
      if (!(v[k] > 0.0) || !std::isfinite(v[k]))
        throw std::invalid_argument(std::string(name) + " entries must be finite and > 0");
  };
  positive(tau_x, "tau_x");
  positive(tau_lam, "tau_lam");
  positive(tau_mu, "tau_mu");
}

double lagrangian(const ConvexProblem& prob, const FlowState& s) {
  double L = prob.f.value(s.x);
  if (prob.m() > 0) L += s.lam.dot(prob.A * s.x - prob.b);
  if (prob.p() > 0) L += s.mu.dot(prob.gvals(s.x));
  return L;
}

KKTReport kkt_residual(const ConvexProblem& prob, const FlowState& s) {
  KKTReport rep;
  Vec grad = prob.f.gradient(s.x);
  if (prob.m() > 0) {
    grad += prob.A.transpose() * s.lam;
    rep.eq_violation = (prob.A * s.x - prob.b).lpNorm<Eigen::Infinity>();
  }
  if (prob.p() > 0) {
    const Vec gv = prob.gvals(s.x);
    for (int i = 0; i < prob.p(); ++i) {
      grad += s.mu[i] * prob.g[static_cast<std::size_t>(i)].gradient(s.x);
      rep.ineq_violation = std::max(rep.ineq_violation, std::max(gv[i], 0.0));
      rep.comp_slack = std::max(rep.comp_slack, std::abs(s.mu[i] * gv[i]));
    }
    rep.dual_feas = s.mu.minCoeff();
  }
  rep.stationarity = grad.lpNorm<Eigen::Infinity>();
  return rep;
}

EqualityFlowRates equality_flow_rhs(const ConvexProblem& prob, const FlowState& s, const Vec& u,
                                    const TimeConstants& tc) {
  Vec force = prob.f.gradient(s.x) + u;
  if (prob.m() > 0) force += prob.A.transpose() * s.lam;
  EqualityFlowRates r;
  r.dx = -force.cwiseQuotient(tc.tau_x);
  r.dlam = prob.m() > 0 ? Vec((prob.A * s.x - prob.b).cwiseQuotient(tc.tau_lam)) : Vec(0);
  r.y = -s.x;
  return r;
}

double positive_projection(double gval, double mu) {
  if (mu < 0.0) throw std::invalid_argument("positive_projection: mu must be >= 0");
  return projection_in_rhs(gval, mu);
}

std::vector<int> active_set(const FlowState& s, const Vec& gvals, double tol) {
  std::vector<int> sigma;
  for (Eigen::Index i = 0; i < s.mu.size(); ++i)
    if (std::abs(s.mu[i]) <= tol && gvals[i] < -tol) sigma.push_back(static_cast<int>(i));
  return sigma;
}

FlowRates interconnected_rhs(const ConvexProblem& prob, const FlowState& s, const Vec& v,
                             const Vec& v_tilde, const TimeConstants& tc) {
  const Vec xt = s.x + v_tilde;
  Vec force = prob.f.gradient(s.x) + v;
  if (prob.m() > 0) force += prob.A.transpose() * s.lam;
  FlowRates r;
  r.dmu.resize(prob.p());
  if (prob.p() > 0) {
    const Vec gv = prob.gvals(xt);
    for (int i = 0; i < prob.p(); ++i) {
      if (s.mu[i] != 0.0) force += s.mu[i] * prob.g[static_cast<std::size_t>(i)].gradient(xt);
      r.dmu[i] = projection_in_rhs(gv[i], s.mu[i]) / tc.tau_mu[i];
    }
  }
  r.dx = -force.cwiseQuotient(tc.tau_x);
  r.dlam = prob.m() > 0 ? Vec((prob.A * s.x - prob.b).cwiseQuotient(tc.tau_lam)) : Vec(0);
  return r;
}

FlowRates damping_injection_rhs(const ConvexProblem& prob, const FlowState& s, double k,
                                const TimeConstants& tc) {
  if (k < 0.0) throw std::invalid_argument("damping gain k must be >= 0");
  Vec v = Vec::Zero(prob.n);
  if (prob.m() > 0) v = k * (prob.A.transpose() * (prob.A * s.x - prob.b));
  return interconnected_rhs(prob, s, v, Vec::Zero(prob.n), tc);
}

FlowRates rates_in_mode(const FlowRates& rates, const Vec& gvals, const std::vector<int>& sigma,
                        const TimeConstants& tc) {
  FlowRates r = rates;
  for (Eigen::Index i = 0; i < r.dmu.size(); ++i) r.dmu[i] = gvals[i] / tc.tau_mu[i];
  for (int i : sigma) r.dmu[i] = 0.0;
  return r;
}

double switched_storage(const FlowRates& rates, const std::vector<int>& sigma,
                        const TimeConstants& tc) {
  double S = 0.5 * rates.dx.dot(tc.tau_x.cwiseProduct(rates.dx));
  if (rates.dlam.size()) S += 0.5 * rates.dlam.dot(tc.tau_lam.cwiseProduct(rates.dlam));
  std::vector<char> in_sigma(static_cast<std::size_t>(rates.dmu.size()), 0);
  for (int i : sigma) in_sigma[static_cast<std::size_t>(i)] = 1;
  for (Eigen::Index i = 0; i < rates.dmu.size(); ++i)
    if (!in_sigma[static_cast<std::size_t>(i)]) S += 0.5 * tc.tau_mu[i] * rates.dmu[i] * rates.dmu[i];
  return S;
}

SwitchAuditReport storage_switch_audit(const StorageTrace& trace, double audit_tol) {
  SwitchAuditReport rep;
  for (const auto& e : trace.switch_events) {
    if (e.entered > 0 && e.left == 0) {
      ++rep.activations;
      rep.max_activation_jump = std::max(rep.max_activation_jump, e.jump);
      if (e.jump > 0.0) rep.pass = false;
      if (!(e.jump < 0.0)) rep.strict_decrease = false;
    } else if (e.left > 0 && e.entered == 0) {
      ++rep.deactivations;
      rep.max_deactivation_jump = std::max(rep.max_deactivation_jump, std::abs(e.jump));
      if (std::abs(e.jump) > audit_tol) rep.pass = false;
    } else if (e.left > 0 && e.entered > 0) {
      ++rep.activations;
      ++rep.deactivations;
      if (e.jump > audit_tol) rep.pass = false;
    }
  }
  return rep;
}

SolveResult solve(const ConvexProblem& prob, const FlowState& init, const TimeConstants& tc,
                  const IntegratorConfig& cfg, const SolveOptions& options) {
  prob.validate();
  const int n = prob.n, m = prob.m(), p = prob.p();
  tc.validate(n, m, p);
  if (init.x.size() != n || init.lam.size() != m || init.mu.size() != p)
    throw std::invalid_argument("initial state does not match problem dimensions");
  for (Eigen::Index i = 0; i < init.mu.size(); ++i)
    if (init.mu[i] < 0.0) throw std::invalid_argument("initial mu must be >= 0");

  FlowRatesFn rates = options.rates;
  if (!rates) {
    const Vec zero = Vec::Zero(n);
    rates = [&prob, &tc, zero](const FlowState& s) { return interconnected_rhs(prob, s, zero, zero, tc); };
  }
  VectorField rhs = [&](double, const Vec& z) { return rates(FlowState::unpack(z, n, m, p)).pack(); };

  IntegrateOptions io;
  if (p > 0) {
    io.guards.values = [&prob, n, m, p](const Vec& z) {
      Vec s(2 * p);
      s << z.tail(p), prob.gvals(z.head(n));
      return s;
    };
    for (int i = 0; i < p; ++i) io.guards.tags.push_back("mu[" + std::to_string(i) + "]");
    for (int i = 0; i < p; ++i) io.guards.tags.push_back("g[" + std::to_string(i) + "]");
    for (int i = 0; i < p; ++i) io.clamp_nonnegative.push_back(n + m + i);
  }
  IntegratorConfig run_cfg = cfg;
  run_cfg.stop_on_convergence = true;

  SolveResult res;
  res.traj = integrate(rhs, init.pack(), run_cfg, io);
  res.final_state = FlowState::unpack(res.traj.final_state(), n, m, p);
  res.kkt = kkt_residual(prob, res.final_state);
  res.converged = steady_state(res.traj, run_cfg).has_value();
  res.kkt_ok = res.kkt.optimal(options.kkt_tol);

  std::set<double> event_times;
  for (const auto& e : res.traj.events) event_times.insert(e.time);

  const auto N = res.traj.size();
  std::vector<double> storage(N);
  std::vector<int> prev_sigma;
  for (std::size_t k = 0; k < N; ++k) {
    const FlowState s = FlowState::unpack(res.traj.states[k], n, m, p);
    const Vec gv = prob.gvals(s.x);
    const FlowRates r = rates(s);
    const auto sigma = active_set(s, gv, cfg.event_tol);
    storage[k] = switched_storage(rates_in_mode(r, gv, sigma, tc), sigma, tc);
    if (k > 0 && event_times.count(res.traj.times[k])) {
      SwitchEvent ev;
      ev.time = res.traj.times[k];
      ev.jump = storage[k] - switched_storage(rates_in_mode(r, gv, prev_sigma, tc), prev_sigma, tc);
      std::vector<int> diff;
      std::set_difference(sigma.begin(), sigma.end(), prev_sigma.begin(), prev_sigma.end(),
                          std::back_inserter(diff));
      ev.entered = static_cast<int>(diff.size());
      diff.clear();
      std::set_difference(prev_sigma.begin(), prev_sigma.end(), sigma.begin(), sigma.end(),
                          std::back_inserter(diff));
      ev.left = static_cast<int>(diff.size());
      if (ev.entered + ev.left > 0) ++res.switch_count;
      res.storage.switch_events.push_back(ev);
    }
    prev_sigma = sigma;
  }
  auto audit = monotone_audit(res.traj.times, storage);
  audit.trace.switch_events = std::move(res.storage.switch_events);
  res.storage = std::move(audit.trace);

  std::ostringstream diag;
  if (!res.converged)
    diag << "not converged by t=" << format_double(res.traj.final_time())
         << " (final rate norm " << format_double(res.traj.rate_norms.back()) << ")";
  else if (!res.kkt_ok)
    diag << "rates settled but KKT residuals exceed " << format_double(options.kkt_tol);
  res.diagnostics = diag.str();
  return res;
}

}  // namespace passiv
