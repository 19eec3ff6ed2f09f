#include "passiv/bm.hpp"

#include "passiv/csv.hpp"
#include "passiv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace passiv {

Mat PseudoGradientSystem::hessian(const Vec& x) const {
  if (hessP) return hessP(x);
  Mat H = finite_diff_jacobian(gradP, x, 1e-6 * std::max(1.0, x.lpNorm<Eigen::Infinity>()));
  return 0.5 * (H + H.transpose());
}

Vec PseudoGradientSystem::velocity(const Vec& x, const Vec& u) const {
  Vec rhs = gradP(x);
  if (m > 0) rhs += G(x) * u;
  Eigen::PartialPivLU<Mat> lu(Q(x));
  return lu.solve(rhs);
}

ConsistencyReport check_system(const PseudoGradientSystem& sys, const std::vector<Vec>& samples) {
  ConsistencyReport rep;
  rep.hessian_source = sys.has_analytic_hessian() ? "analytic" : "finite-difference";
  for (const Vec& x : samples) {
    if (x.size() != sys.n) {
      rep.dimensions_ok = false;
      continue;
    }
    const Mat Q = sys.Q(x);
    const Vec g = sys.gradP(x);
    const Mat H = sys.hessian(x);
    const Mat G = sys.G(x);
    if (Q.rows() != sys.n || Q.cols() != sys.n || g.size() != sys.n || H.rows() != sys.n ||
        H.cols() != sys.n || G.rows() != sys.n || G.cols() != sys.m) {
      rep.dimensions_ok = false;
      continue;
    }
    const double h = 1e-6 * std::max(1.0, x.lpNorm<Eigen::Infinity>());
    const Vec fd = finite_diff_gradient(sys.P, x, h);
    const double scale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
    rep.max_gradient_rel_error =
        std::max(rep.max_gradient_rel_error, (fd - g).lpNorm<Eigen::Infinity>() / scale);
    rep.max_hessian_asymmetry =
        std::max(rep.max_hessian_asymmetry, (H - H.transpose()).lpNorm<Eigen::Infinity>());
  }
  return rep;
}

MixedPotentialRate mixed_potential_rate(const PseudoGradientSystem& sys, const Vec& x,
                                        const Vec& xdot, const Vec& u) {
  if (x.size() != sys.n || xdot.size() != sys.n || u.size() != sys.m)
    throw std::invalid_argument("mixed_potential_rate: dimension mismatch");
  MixedPotentialRate r;
  r.y = -sys.G(x).transpose() * xdot;
  r.value = xdot.dot(sys.Q(x) * xdot) + u.dot(r.y);
  return r;
}

AdmissiblePair admissible_pair(const PseudoGradientSystem& sys, double lambda, const Mat& M,
                               const std::vector<SamplePoint>& samples) {
  if (M.rows() != sys.n || M.cols() != sys.n)
    throw std::invalid_argument("admissible_pair: M must be n x n");
  if ((M - M.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * std::max(1.0, M.lpNorm<Eigen::Infinity>()))
    throw std::invalid_argument("admissible_pair: M must be symmetric");

  AdmissiblePair pair;
  pair.lambda = lambda;
  pair.M = M;
  const int n = sys.n;
  auto transform = [sys, lambda, M, n](const Vec& x) {
    return Mat(lambda * Mat::Identity(n, n) + sys.hessian(x) * M);
  };
  pair.tildeP = [sys, lambda, M](const Vec& x) {
    const Vec g = sys.gradP(x);
    return lambda * sys.P(x) + 0.5 * g.dot(M * g);
  };
  pair.grad_tildeP = [sys, lambda, M](const Vec& x) {
    const Vec g = sys.gradP(x);
    return Vec(lambda * g + sys.hessian(x) * (M * g));
  };
  pair.tildeQ = [sys, transform](const Vec& x) { return Mat(transform(x) * sys.Q(x)); };
  pair.tildeG = [sys, transform](const Vec& x) { return Mat(transform(x) * sys.G(x)); };

  for (const auto& s : samples) {
    const Vec u = s.u.size() ? s.u : Vec::Zero(sys.m);
    const Vec xdot = sys.velocity(s.x, u);
    Vec r = pair.tildeQ(s.x) * xdot - pair.grad_tildeP(s.x);
    if (sys.m > 0) r -= pair.tildeG(s.x) * u;
    const double scale = std::max(1.0, pair.grad_tildeP(s.x).lpNorm<Eigen::Infinity>());
    pair.max_residual = std::max(pair.max_residual, r.lpNorm<Eigen::Infinity>() / scale);
  }
  return pair;
}

DefinitenessResult neg_semidefinite_symmetric_part(const Mat& A, double tol) {
  if (A.rows() != A.cols()) throw std::invalid_argument("definiteness check needs a square matrix");
  if (A.size() == 0) return {true, 0.0};
  const Mat S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().maxCoeff();
  return {top <= tol, top};
}

BoxCoverageReport check_nsd_on_box(const MatrixOracle& A, const Box& box, int grid_per_dim,
                                   int random_points, std::uint64_t seed, double tol) {
  const auto n = box.lo.size();
  if (box.hi.size() != n) throw std::invalid_argument("box bounds differ in size");
  BoxCoverageReport rep;
  auto visit = [&](const Vec& x) {
    auto r = neg_semidefinite_symmetric_part(A(x), tol);
    ++rep.samples;
    if (r.max_eigenvalue > rep.worst_max_eigenvalue) {
      rep.worst_max_eigenvalue = r.max_eigenvalue;
      rep.worst_point = x;
    }
    rep.ok = rep.ok && r.ok;
  };
  if (grid_per_dim > 0) {
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    while (true) {
      Vec x(n);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double frac = grid_per_dim == 1 ? 0.5 : double(idx[k]) / (grid_per_dim - 1);
        x[k] = box.lo[k] + frac * (box.hi[k] - box.lo[k]);
      }
      visit(x);
      Eigen::Index k = 0;
      while (k < n && ++idx[k] == grid_per_dim) idx[k++] = 0;
      if (k == n) break;
    }
  }
  SplitMix64 rng(seed);
  for (int r = 0; r < random_points; ++r) {
    Vec x(n);
    for (Eigen::Index k = 0; k < n; ++k) x[k] = rng.uniform(box.lo[k], box.hi[k]);
    visit(x);
  }
  return rep;
}

double krasovskii_storage(const Mat& M, const Vec& xdot) {
  if (M.rows() != M.cols() || M.rows() != xdot.size())
    throw std::invalid_argument("krasovskii_storage: dimension mismatch");
  if ((M - M.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * std::max(1.0, M.lpNorm<Eigen::Infinity>()))
    throw std::invalid_argument("krasovskii_storage: M must be symmetric");
  Eigen::LLT<Mat> llt(M);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("krasovskii_storage: M must be positive definite");
  return 0.5 * xdot.dot(M * xdot);
}

double default_audit_tol(const std::vector<double>& storage) {
  double top = 0.0;
  for (double s : storage) top = std::max(top, std::abs(s));
  return 1e-6 * (1.0 + top);
}

AuditResult dissipation_audit(const std::vector<double>& times, const std::vector<double>& storage,
                              const std::vector<double>& supply_integral, double audit_tol) {
  if (times.size() != storage.size() || times.size() != supply_integral.size())
    throw std::invalid_argument("passivity audit: series lengths differ");
  AuditResult out;
  StorageTrace& tr = out.trace;
  tr.times = times;
  tr.storage = storage;
  tr.supply_integral = supply_integral;
  tr.margin.assign(times.size(), 0.0);

  AuditReport& rep = out.report;
  rep.audit_tol = audit_tol < 0.0 ? default_audit_tol(storage) : audit_tol;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double slack = tr.supply_integral[k] - storage[k];
    best = std::max(best, slack);
    tr.margin[k] = slack - best;
    if (k == 0 || tr.margin[k] < rep.min_margin) {
      rep.min_margin = tr.margin[k];
      rep.worst_time = times[k];
    }
  }
  rep.pass = rep.min_margin >= -rep.audit_tol;
  return out;
}

AuditResult passivity_audit_series(const std::vector<double>& times,
                                   const std::vector<double>& storage,
                                   const std::vector<double>& supply_rate, double audit_tol) {
  if (times.size() != storage.size() || times.size() != supply_rate.size())
    throw std::invalid_argument("passivity audit: series lengths differ");
  std::vector<double> w(times.size(), 0.0);
  for (std::size_t k = 1; k < times.size(); ++k)
    w[k] = w[k - 1] + 0.5 * (times[k] - times[k - 1]) * (supply_rate[k] + supply_rate[k - 1]);
  return dissipation_audit(times, storage, w, audit_tol);
}

AuditResult passivity_audit(const Trajectory& traj, const SampleScalar& storage,
                            const SampleVector& port_u, const SampleVector& port_y,
                            double audit_tol) {
  std::vector<double> s(traj.size()), w(traj.size(), 0.0);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double t = traj.times[k];
    const Vec& x = traj.states[k];
    s[k] = storage(t, x);
    if (port_u && port_y) w[k] = port_u(t, x).dot(port_y(t, x));
  }
  return passivity_audit_series(traj.times, s, w, audit_tol);
}

AuditResult monotone_audit(const std::vector<double>& times, const std::vector<double>& values,
                           double audit_tol) {
  return passivity_audit_series(times, values, std::vector<double>(times.size(), 0.0), audit_tol);
}

void write_storage_csv(const StorageTrace& trace, const std::filesystem::path& path) {
  CsvWriter out(path, {"t", "storage", "supply", "margin"});
  for (std::size_t k = 0; k < trace.times.size(); ++k)
    out.row(trace.times[k], {trace.storage[k], trace.supply_integral[k],
                             k < trace.margin.size() ? trace.margin[k] : 0.0});
}

void write_audit_json(const AuditReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "{\"verdict\": \"" << (report.pass ? "PASS" : "FAIL")
      << "\", \"min_margin\": " << format_double(report.min_margin)
      << ", \"worst_time\": " << format_double(report.worst_time)
      << ", \"audit_tol\": " << format_double(report.audit_tol) << "}\n";
}

}  // namespace passiv
