#include "passiv/svm.hpp"

#include "passiv/csv.hpp"
#include "passiv/rng.hpp"

#include <cmath>

namespace passiv {

Dataset generate_gaussian_classes(std::uint64_t seed, const GaussianClassSpec& spec) {
  if (spec.n_per_class < 1) throw std::invalid_argument("svm.n_per_class must be >= 1");
  if (std::abs(spec.cov(0, 1) - spec.cov(1, 0)) > 1e-12)
    throw std::invalid_argument("svm.cov must be symmetric");
  Eigen::LLT<Eigen::Matrix2d> llt(spec.cov);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("svm.cov must be positive definite");
  const Eigen::Matrix2d Lc = llt.matrixL();

  SplitMix64 rng(seed);
  const int N = spec.n_per_class;
  Dataset d;
  d.points.resize(2 * N, 2);
  d.labels.resize(2 * N);
  for (int k = 0; k < 2 * N; ++k) {
    Eigen::Vector2d z;
    z[0] = rng.normal();
    z[1] = rng.normal();
    const bool a = k < N;
    d.points.row(k) = ((a ? spec.mean_a : spec.mean_b) + Lc * z).transpose();
    d.labels[k] = a ? 1.0 : -1.0;
  }
  return d;
}

ConvexProblem build_svm_problem(const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("svm dataset is empty");
  ConvexProblem prob;
  prob.n = 3;
  Mat Q = Mat::Zero(3, 3);
  Q(0, 0) = Q(1, 1) = 1.0;
  prob.f = quadratic_function(Q, Vec::Zero(3));
  prob.A.resize(0, 3);
  prob.b.resize(0);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double y = data.labels[i];
    Vec a(3);
    a << -y * data.points(i, 0), -y * data.points(i, 1), -y;
    prob.g.push_back(affine_function(a, -1.0));
  }
  // batched form of the same constraints
  Mat Gm(data.size(), 3);
  Gm.leftCols(2) = -(data.labels.asDiagonal() * data.points);
  Gm.col(2) = -data.labels;
  prob.g_values = [Gm](const Vec& x) { return Vec(Vec::Ones(Gm.rows()) + Gm * x); };
  return prob;
}

FlowRates svm_flow_rhs(const Dataset& data, const FlowState& s, const TimeConstants& tc) {
  const Eigen::Index N = data.size();
  const Eigen::Vector2d beta = s.x.head<2>();
  const double beta0 = s.x[2];
  const Vec ymu = data.labels.cwiseProduct(s.mu);

  FlowRates r;
  r.dx.resize(3);
  const Eigen::Vector2d pull = data.points.transpose() * ymu;
  r.dx[0] = -(beta[0] - pull[0]) / tc.tau_x[0];
  r.dx[1] = -(beta[1] - pull[1]) / tc.tau_x[1];
  r.dx[2] = ymu.sum() / tc.tau_x[2];
  r.dlam.resize(0);
  r.dmu.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double g = 1.0 - data.labels[i] * (data.points(i, 0) * beta[0] + data.points(i, 1) * beta[1] + beta0);
    r.dmu[i] = (s.mu[i] > 0.0 ? g : std::max(0.0, g)) / tc.tau_mu[i];
  }
  return r;
}

SupportVectorResult support_vectors(const Dataset& data, const FlowState& final_state, double tol) {
  SupportVectorResult out;
  out.plane.beta = final_state.x.head<2>();
  out.plane.beta0 = final_state.x[2];
  const Vec ymu = data.labels.cwiseProduct(final_state.mu);
  const Eigen::Vector2d rep = data.points.transpose() * ymu;
  out.representer_residual = (out.plane.beta - rep).norm();
  out.label_balance = std::abs(ymu.sum());
  out.min_functional_margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double fm = data.labels[i] * (data.points.row(i).dot(out.plane.beta) + out.plane.beta0);
    out.min_functional_margin = std::min(out.min_functional_margin, fm);
    if (final_state.mu[i] > tol) {
      out.indices.push_back(static_cast<int>(i));
      out.max_support_g = std::max(out.max_support_g, std::abs(1.0 - fm));
    }
  }
  return out;
}

SvmRun train_svm(const Dataset& data, const TimeConstants& tc, const IntegratorConfig& cfg,
                 double sv_tol) {
  const ConvexProblem prob = build_svm_problem(data);
  FlowState init{Vec::Zero(3), Vec(0), Vec::Zero(data.size())};
  SolveOptions opts;
  opts.rates = [&data, &tc](const FlowState& s) { return svm_flow_rhs(data, s, tc); };
  SvmRun run;
  run.solve = solve(prob, init, tc, cfg, opts);
  run.svs = support_vectors(data, run.solve.final_state, sv_tol);
  return run;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  CsvWriter out(path, {"x1", "x2", "label"});
  for (Eigen::Index i = 0; i < data.size(); ++i)
    out.row({data.points(i, 0), data.points(i, 1), data.labels[i]});
}

}  // namespace passiv
