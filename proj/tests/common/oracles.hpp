// Independent reference computations used by the unit and acceptance tests.
#pragma once

#include "passiv/passiv.hpp"

#include <cmath>
#include <optional>

namespace oracle {

using passiv::Mat;
using passiv::Vec;

// min 1/2 x'Qx + c'x  s.t.  A x = b,  Gi x <= h
struct RandomQP {
  int n = 0;
  Mat Q;
  Vec c;
  Mat A;
  Vec b;
  Mat Gi;
  Vec h;
};

inline RandomQP random_qp(passiv::SplitMix64& rng, int max_n, int max_m, int max_p) {
  RandomQP qp;
  qp.n = 2 + static_cast<int>(rng.next() % (max_n - 1));
  const int m = static_cast<int>(rng.next() % (std::min(max_m, qp.n - 1) + 1));
  const int p = 1 + static_cast<int>(rng.next() % max_p);
  auto draw = [&](int r, int c) { return Mat(Mat::NullaryExpr(r, c, [&] { return rng.uniform(-1, 1); })); };
  const Mat B = draw(qp.n, qp.n);
  qp.Q = B.transpose() * B + Mat::Identity(qp.n, qp.n);
  qp.c = 3.0 * draw(qp.n, 1);
  const Vec x0 = draw(qp.n, 1);
  qp.A = draw(m, qp.n);
  qp.b = qp.A * x0;
  qp.Gi = draw(p, qp.n);
  qp.h = qp.Gi * x0 + Vec(Vec::NullaryExpr(p, [&] { return rng.uniform(0.1, 1.0); }));
  return qp;
}

inline passiv::ConvexProblem to_problem(const RandomQP& qp) {
  passiv::ConvexProblem prob;
  prob.n = qp.n;
  prob.f = passiv::quadratic_function(qp.Q, qp.c);
  prob.A = qp.A;
  prob.b = qp.b;
  for (int i = 0; i < qp.Gi.rows(); ++i)
    prob.g.push_back(passiv::affine_function(qp.Gi.row(i).transpose(), qp.h[i]));
  return prob;
}

struct KktPoint {
  Vec x;
  Vec lam;
  Vec mu;
};

// Tries every active set; returns the first stationary point that is primal and dual feasible.
inline std::optional<KktPoint> enumerate_active_sets(const RandomQP& qp, double tol = 1e-9) {
  const int n = qp.n;
  const int m = static_cast<int>(qp.A.rows());
  const int p = static_cast<int>(qp.Gi.rows());
  for (unsigned mask = 0; mask < (1u << p); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < p; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const int k = static_cast<int>(act.size());
    if (m + k > n) continue;
    Mat K = Mat::Zero(n + m + k, n + m + k);
    Vec rhs = Vec::Zero(n + m + k);
    K.topLeftCorner(n, n) = qp.Q;
    K.block(0, n, n, m) = qp.A.transpose();
    K.block(n, 0, m, n) = qp.A;
    rhs.head(n) = -qp.c;
    rhs.segment(n, m) = qp.b;
    for (int j = 0; j < k; ++j) {
      K.block(0, n + m + j, n, 1) = qp.Gi.row(act[j]).transpose();
      K.block(n + m + j, 0, 1, n) = qp.Gi.row(act[j]);
      rhs[n + m + j] = qp.h[act[j]];
    }
    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible()) continue;
    const Vec sol = lu.solve(rhs);
    KktPoint pt{sol.head(n), sol.segment(n, m), Vec::Zero(p)};
    for (int j = 0; j < k; ++j) pt.mu[act[j]] = sol[n + m + j];
    if (pt.mu.minCoeff() < -tol) continue;
    if (p > 0 && (qp.Gi * pt.x - qp.h).maxCoeff() > tol) continue;
    return pt;
  }
  return std::nullopt;
}

// Damped rotation xdot = A x with a closed-form solution.
inline Vec damped_rotation_exact(double t, const Vec& x0) {
  const double d = std::exp(-0.5 * t), c = std::cos(2.0 * t), s = std::sin(2.0 * t);
  Mat E(2, 2);
  E << c, s, -s, c;
  return d * E * x0;
}

inline Mat damped_rotation_matrix() {
  Mat A(2, 2);
  A << -0.5, 2.0, -2.0, -0.5;
  return A;
}

// Observed global order of rk4 on the damped rotation from step halving.
inline double rk4_observed_order() {
  const Mat A = damped_rotation_matrix();
  const Vec x0 = (Vec(2) << 1.0, 0.5).finished();
  const double T = 2.0;
  auto error = [&](int steps) {
    const double h = T / steps;
    Vec x = x0;
    for (int k = 0; k < steps; ++k)
      x = passiv::rk4_step([&](double, const Vec& y) { return Vec(A * y); }, k * h, x, h);
    return (x - damped_rotation_exact(T, x0)).norm();
  };
  const double e1 = error(20), e2 = error(40), e3 = error(80);
  return std::min(std::log2(e1 / e2), std::log2(e2 / e3));
}

}  // namespace oracle

namespace oracle {

struct LineStart {
  passiv::LineState state;
  double I0 = 0.0;
};

// Quadratic profiles whose boundary circuits (all unit elements, L = C = 1, lossless) satisfy
// the first-order compatibility conditions, so the solution stays C^1 near both ends.
inline LineStart compatible_lossless_start(int M) {
  LineStart out{passiv::LineState::zero(M), -0.7};
  for (int k = 0; k <= M; ++k) {
    const double z = double(k) / M;
    out.state.i[k] = 0.2 + 0.5 * z - 0.3 * z * z;
    out.state.v[k] = 1.0 + 0.4 * z - 0.05 * z * z;
  }
  out.state.vC0 = 1.2;
  out.state.vC1 = 0.95;
  return out;
}

}  // namespace oracle
