#include "passiv/tline.hpp"

#include "passiv/csv.hpp"

#include <cmath>

namespace passiv {

void LineParams::validate(bool allow_lossless) const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string("line.") + name + " must be finite and > 0");
  };
  positive(L, "L");
  positive(C, "C");
  positive(R0, "R0");
  positive(C0, "C0");
  positive(R1, "R1");
  positive(C1, "C1");
  if (allow_lossless) {
    if (!(R >= 0.0) || !std::isfinite(R)) throw std::invalid_argument("line.R must be finite and >= 0");
    if (!(G >= 0.0) || !std::isfinite(G)) throw std::invalid_argument("line.G must be finite and >= 0");
  } else {
    positive(R, "R");
    positive(G, "G");
  }
}

double LineParams::omega() const { return std::sqrt(R * G); }

CompatibilityReport boundary_compatibility(const LineParams& p, double tol) {
  CompatibilityReport r;
  r.m2_from_load = p.C1 * p.R1 * p.R1 / p.L;
  r.m2_from_line = p.C1 / p.C;
  r.theta_load = p.C1 * p.R1;
  r.theta_source = p.C0 * p.R0;
  auto close = [tol](double a, double b) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(a)); };
  r.ok = close(r.m2_from_load, r.m2_from_line) && close(r.theta_load, r.theta_source);
  return r;
}

Vec LineState::pack() const {
  const int n = M() + 1;
  Vec z(2 * n + 2);
  z << i, v, vC0, vC1;
  return z;
}

LineState LineState::unpack(const Vec& z, int M) {
  const int n = M + 1;
  if (z.size() != 2 * n + 2) throw std::invalid_argument("LineState::unpack: size mismatch");
  return {z.head(n), z.segment(n, n), z[2 * n], z[2 * n + 1]};
}

LineState LineState::zero(int M) {
  if (M < 8) throw std::invalid_argument("line grid needs M >= 8");
  return {Vec::Zero(M + 1), Vec::Zero(M + 1), 0.0, 0.0};
}

Vec grid_derivative(const Vec& f, double dz) {
  const auto n = f.size();
  if (n < 3) throw std::invalid_argument("grid_derivative needs at least 3 nodes");
  Vec d(n);
  d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dz);
  for (Eigen::Index k = 1; k + 1 < n; ++k) d[k] = (f[k + 1] - f[k - 1]) / (2.0 * dz);
  d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dz);
  return d;
}

double grid_integral(const Vec& f) {
  const auto n = f.size();
  const double dz = 1.0 / double(n - 1);
  return dz * (f.sum() - 0.5 * (f[0] + f[n - 1]));
}

void apply_boundary_closure(const LineParams& p, LineState& s) {
  const int M = s.M();
  s.v[0] = s.vC0 - p.R0 * s.i[0];
  s.v[M] = p.R1 * s.i[M] + s.vC1;
}

LineState tline_rhs(const LineParams& p, const LineState& state, double I0) {
  LineState s = state;
  apply_boundary_closure(p, s);
  const int M = s.M();
  const double dz = 1.0 / M;
  const Vec vz = grid_derivative(s.v, dz);
  const Vec iz = grid_derivative(s.i, dz);
  LineState r;
  r.i = -(vz + p.R * s.i) / p.L;
  r.v = -(p.G * s.v + iz) / p.C;
  r.vC0 = (I0 - s.i[0]) / p.C0;
  r.vC1 = s.i[M] / p.C1;
  r.v[0] = r.vC0 - p.R0 * r.i[0];
  r.v[M] = p.R1 * r.i[M] + r.vC1;
  return r;
}

double max_stable_step(const LineParams& p, int M) { return 0.9 * std::sqrt(p.L * p.C) / M; }

void check_step(const LineParams& p, int M, double step) {
  if (step > max_stable_step(p, M))
    throw std::invalid_argument("integrator.step " + format_double(step) +
                                " exceeds the line stability limit 0.9*dz*sqrt(LC) = " +
                                format_double(max_stable_step(p, M)));
}

LineEquilibrium tline_equilibrium(const LineParams& p, double vC1_star, int M) {
  p.validate();
  LineEquilibrium eq;
  eq.state = LineState::zero(M);
  const double w = p.omega();
  for (int k = 0; k <= M; ++k) {
    const double z = double(k) / M;
    eq.state.i[k] = (p.G / w) * vC1_star * std::sinh(w * (1.0 - z));
    eq.state.v[k] = vC1_star * std::cosh(w * (1.0 - z));
  }
  eq.state.i[M] = 0.0;
  eq.vC1_star = vC1_star;
  eq.i0_star = eq.state.i[0];
  eq.I0_star = eq.i0_star;
  eq.vC0_star = eq.state.v[0] + eq.i0_star * p.R0;
  eq.state.vC0 = eq.vC0_star;
  eq.state.vC1 = vC1_star;
  return eq;
}

DissipationReport dissipation_obstacle_report(const LineParams& p, double vC1_star, int M) {
  const LineEquilibrium eq = tline_equilibrium(p, vC1_star, M);
  const Vec& i = eq.state.i;
  const Vec& v = eq.state.v;
  DissipationReport r;
  r.supply = eq.I0_star * eq.vC0_star;
  r.dissipation = grid_integral((p.R * i.array().square() + p.G * v.array().square()).matrix()) +
                  p.R0 * eq.i0_star * eq.i0_star;
  r.relative_mismatch = r.supply != 0.0 ? std::abs(r.supply - r.dissipation) / std::abs(r.supply)
                                        : std::abs(r.dissipation);
  return r;
}

bool AdmissibleLineParams::first_condition() const {
  return lambda_prime >= 0.0 && lambda_prime <= tau * (1.0 - zeta * zeta);
}

bool AdmissibleLineParams::second_condition() const {
  return (lambda_prime - tau) * (lambda_prime + 1.0) + 0.25 * (tau + 1.0) * (tau + 1.0) * zeta * zeta <= 0.0;
}

bool AdmissibleLineParams::zeta_bound() const {
  return zeta * zeta <= 4.0 * tau / ((1.0 + tau) * (1.0 + tau));
}

bool AdmissibleLineParams::unit_lambda_feasible() const {
  AdmissibleLineParams probe = *this;
  probe.lambda_prime = 1.0 / beta;
  return probe.first_condition() && probe.second_condition();
}

AdmissibleLineParams admissible_params_search(const LineParams& p) {
  p.validate();
  AdmissibleLineParams a;
  a.tau = p.R * p.C / (p.L * p.G);
  a.zeta = std::sqrt(2.0 * a.tau / ((1.0 + a.tau) * (1.0 + a.tau)));
  const double c = 0.25 * (a.tau + 1.0) * (a.tau + 1.0) * a.zeta * a.zeta;
  auto q = [&](double lp) { return (lp - a.tau) * (lp + 1.0) + c; };
  // q(0) = c - tau < 0 and q grows without bound: bracket the positive root.
  double lo = 0.0, hi = a.tau + 1.0;
  while (q(hi) <= 0.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (q(mid) <= 0.0 ? lo : hi) = mid;
  }
  a.feasible_upper = std::min(a.tau * (1.0 - a.zeta * a.zeta), lo);
  a.lambda_prime = 0.5 * a.feasible_upper;
  a.alpha = p.R * p.C;
  a.beta = p.L * p.G;
  a.lambda = a.lambda_prime * a.beta;
  a.theta = a.alpha * p.L / p.R;
  a.m2 = a.zeta * a.theta / std::sqrt(p.L * p.C);
  if (!a.first_condition() || !a.second_condition() || !a.zeta_bound())
    throw std::logic_error("admissible_params_search produced an infeasible record");
  return a;
}

double boundary_pi_control(const LineParams&, const LineState& s, const LineTargets& t, double K_P,
                           double K_I, double vC0_dot) {
  if (K_P < 0.0 || K_I < 0.0) throw std::invalid_argument("K_P and K_I must be >= 0");
  return t.i0_star - K_P * vC0_dot - K_I * (s.vC0 - t.vC0_star);
}

double boundary_pi_closed_loop_input(const LineParams& p, const LineState& s,
                                     const LineTargets& t, double K_P, double K_I) {
  if (K_P < 0.0 || K_I < 0.0) throw std::invalid_argument("K_P and K_I must be >= 0");
  return (t.i0_star + K_P * s.i[0] / p.C0 - K_I * (s.vC0 - t.vC0_star)) / (1.0 + K_P / p.C0);
}

double closed_loop_lyapunov(const LineParams& p, const LineState& state, const LineEquilibrium& eq,
                            const AdmissibleLineParams& adm, double K_I) {
  LineState s = state;
  apply_boundary_closure(p, s);
  const int M = s.M();
  if (eq.state.M() != M) throw std::invalid_argument("equilibrium grid differs from state grid");
  const double dz = 1.0 / M;
  const Vec vz = grid_derivative(s.v, dz);
  const Vec iz = grid_derivative(s.i, dz);
  const double coef = (adm.alpha * (1.0 - adm.zeta * adm.zeta) - 1.0) / (2.0 * p.R);
  const double a = adm.zeta * std::sqrt(p.C / 2.0);
  const double b = std::sqrt(p.L / 2.0);
  Vec integrand(M + 1);
  for (int k = 0; k <= M; ++k) {
    const double e = p.R * s.i[k] + vz[k];
    const double delta = a * e - b * (p.G * s.v[k] + iz[k]);
    const double f1 = vz[k] + p.R * eq.state.i[k];
    const double f2 = p.G * (s.v[k] - eq.state.v[k]);  // G v + i*_z, with i*_z = -G v*
    integrand[k] = coef * e * e + delta * delta + f1 * f1 / (2.0 * p.R) + f2 * f2 / (2.0 * p.G);
  }
  const double di0 = s.i[0] - eq.i0_star;
  const double dv = s.vC0 - eq.vC0_star;
  return grid_integral(integrand) + 0.5 * p.R0 * di0 * di0 + 0.5 * p.R1 * s.i[M] * s.i[M] +
         0.5 * K_I * dv * dv;
}

double line_distance_norm(const LineParams& p, const LineState& state, const LineEquilibrium& eq) {
  LineState s = state;
  apply_boundary_closure(p, s);
  const int M = s.M();
  const Vec di = s.i - eq.state.i;
  const Vec dv = s.v - eq.state.v;
  const Vec dvz = grid_derivative(dv, 1.0 / M);
  const Vec integrand = ((p.R * di + dvz).array().square() + dvz.array().square() + dv.array().square()).matrix();
  return grid_integral(integrand) + di[0] * di[0] + di[M] * di[M] +
         (s.vC0 - eq.vC0_star) * (s.vC0 - eq.vC0_star);
}

double line_energy(const LineParams& p, const LineState& state) {
  LineState s = state;
  apply_boundary_closure(p, s);
  return 0.5 * grid_integral((p.L * s.i.array().square() + p.C * s.v.array().square()).matrix()) +
         0.5 * p.C0 * s.vC0 * s.vC0 + 0.5 * p.C1 * s.vC1 * s.vC1;
}

ConservationReport conservation_check(const LineParams& p, const Trajectory& traj, int M) {
  ConservationReport rep;
  rep.lossless = p.R == 0.0 && p.G == 0.0;
  const std::size_t N = traj.size();
  std::vector<LineState> states;
  states.reserve(N);
  for (const auto& z : traj.states) {
    LineState s = LineState::unpack(z, M);
    apply_boundary_closure(p, s);
    states.push_back(std::move(s));
  }
  const double w = p.omega();
  Vec a(M + 1), b(M + 1);
  for (int k = 0; k <= M; ++k) {
    const double z = double(k) / M;
    a[k] = std::sqrt(p.G) / p.C * std::cosh(w * z);
    b[k] = std::sqrt(p.R) / p.L * std::sinh(w * z);
  }
  std::vector<double> I(N), V(N), W(N);
  for (std::size_t k = 0; k < N; ++k) {
    I[k] = grid_integral(states[k].i);
    V[k] = grid_integral(states[k].v);
    W[k] = grid_integral((a.cwiseProduct(states[k].i) + b.cwiseProduct(states[k].v)).eval());
  }
  for (std::size_t k = 1; k + 1 < N; ++k) {
    const double dt = traj.times[k + 1] - traj.times[k - 1];
    const LineState& s = states[k];
    if (rep.lossless) {
      const double fi = (s.v[0] - s.v[M]) / p.L;
      const double fv = (s.i[0] - s.i[M]) / p.C;
      rep.max_flux = std::max({rep.max_flux, std::abs(fi), std::abs(fv)});
      rep.max_residual_current = std::max(rep.max_residual_current, std::abs((I[k + 1] - I[k - 1]) / dt - fi));
      rep.max_residual_voltage = std::max(rep.max_residual_voltage, std::abs((V[k + 1] - V[k - 1]) / dt - fv));
    } else {
      const double flux = -((a[M] * s.v[M] / p.L + b[M] * s.i[M] / p.C) - (a[0] * s.v[0] / p.L + b[0] * s.i[0] / p.C));
      rep.max_flux = std::max(rep.max_flux, std::abs(flux));
      rep.max_residual_lossy = std::max(rep.max_residual_lossy, std::abs((W[k + 1] - W[k - 1]) / dt - flux));
    }
  }
  return rep;
}

Trajectory simulate_line_open(const LineParams& p, const LineState& s0, double I0,
                              const IntegratorConfig& cfg) {
  p.validate(true);
  const int M = s0.M();
  check_step(p, M, cfg.step);
  LineState init = s0;
  apply_boundary_closure(p, init);
  return integrate([&](double, const Vec& z) { return tline_rhs(p, LineState::unpack(z, M), I0).pack(); },
                   init.pack(), cfg);
}

LineRun simulate_line_pi(const LineParams& p, double vC1_star, double K_P, double K_I,
                         const LineState& s0, const IntegratorConfig& cfg) {
  p.validate();
  const int M = s0.M();
  check_step(p, M, cfg.step);
  LineRun run;
  run.eq = tline_equilibrium(p, vC1_star, M);
  run.adm = admissible_params_search(p);
  const LineTargets targets{run.eq.i0_star, run.eq.vC0_star};
  LineState init = s0;
  apply_boundary_closure(p, init);
  run.traj = integrate(
      [&](double, const Vec& z) {
        const LineState s = LineState::unpack(z, M);
        return tline_rhs(p, s, boundary_pi_closed_loop_input(p, s, targets, K_P, K_I)).pack();
      },
      init.pack(), cfg);
  for (const auto& z : run.traj.states)
    run.lyapunov.push_back(closed_loop_lyapunov(p, LineState::unpack(z, M), run.eq, run.adm, K_I));
  run.audit = monotone_audit(run.traj.times, run.lyapunov);
  return run;
}

void write_space_time_csv(const Trajectory& traj, int M, const std::filesystem::path& path) {
  std::vector<std::string> header{"t"};
  for (int k = 0; k <= M; ++k) header.push_back("i" + std::to_string(k));
  for (int k = 0; k <= M; ++k) header.push_back("v" + std::to_string(k));
  header.push_back("vC0");
  header.push_back("vC1");
  CsvWriter out(path, header);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const Vec& z = traj.states[k];
    out.row(traj.times[k], std::vector<double>(z.data(), z.data() + z.size()));
  }
}

}  // namespace passiv
