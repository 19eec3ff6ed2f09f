#pragma once

#include "passiv/pdflow.hpp"

#include <cstdint>
#include <filesystem>

namespace passiv {

struct Dataset {
  Eigen::Matrix<double, Eigen::Dynamic, 2> points;
  Vec labels;  // +1 for class a, -1 for class b

  Eigen::Index size() const { return points.rows(); }
};

struct Hyperplane {
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  double beta0 = 0.0;

  double margin() const { return 2.0 / beta.norm(); }
};

struct GaussianClassSpec {
  int n_per_class = 300;
  Eigen::Vector2d mean_a{0.0, 0.0};
  Eigen::Vector2d mean_b{0.0, 6.0};
  Eigen::Matrix2d cov = (Eigen::Matrix2d() << 1.0, 1.5, 1.5, 3.0).finished();
};

// First n_per_class rows are class a (label +1), then class b (label -1).
// Each point is mean + chol(cov) * (z1, z2) with z drawn from SplitMix64 normals.
Dataset generate_gaussian_classes(std::uint64_t seed, const GaussianClassSpec& spec = {});

// Variables (beta1, beta2, beta0); g_i = 1 - y_i (beta'x_i + beta0).
ConvexProblem build_svm_problem(const Dataset& data);

FlowRates svm_flow_rhs(const Dataset& data, const FlowState& s, const TimeConstants& tc);

struct SupportVectorResult {
  std::vector<int> indices;
  Hyperplane plane;
  double representer_residual = 0.0;  // |beta - sum mu_i y_i x_i|
  double label_balance = 0.0;         // |sum mu_i y_i|
  double max_support_g = 0.0;         // max |g_i| over support vectors
  double min_functional_margin = 0.0; // min y_i (beta'x_i + beta0)
};

SupportVectorResult support_vectors(const Dataset& data, const FlowState& final_state, double tol);

struct SvmRun {
  SolveResult solve;
  SupportVectorResult svs;
};

SvmRun train_svm(const Dataset& data, const TimeConstants& tc, const IntegratorConfig& cfg,
                 double sv_tol = 1e-6);

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace passiv
