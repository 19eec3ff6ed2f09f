#pragma once

#include "passiv/passiv.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace passiv::experiment {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kValidation = 2, kDivergence = 3, kAuditFailure = 4 };

struct Diagnostics {
  std::vector<std::string> errors;

  void add(const std::string& field, const std::string& message) { errors.push_back(field + ": " + message); }
  bool ok() const { return errors.empty(); }
};

enum class Kind { Solve, Svm, Plant, Tline, Audit };

const char* kind_name(Kind k);
std::optional<Kind> parse_kind(const std::string& s);

// min 1/2 x'Qx + c'x + c0  s.t.  Ax = b,  g_i(x) <= 0
struct InequalitySpec {
  std::string type;  // "affine" or a registered name
  InequalityParams params;
};

struct ProblemSpec {
  int n = 0;
  Mat Q;
  Vec c;
  double c0 = 0.0;
  Mat A;
  Vec b;
  std::vector<InequalitySpec> inequalities;

  ConvexProblem build() const;
};

struct SolveSpec {
  ProblemSpec problem;
  std::string problem_file;  // as given; empty when inline
  Vec x0, lam0, mu0;
  Vec tau_x, tau_lam, tau_mu;
  double kkt_tol = 1e-6;
  double damping = 0.0;
  double switch_audit_tol = 1e-6;
};

struct SvmSpec {
  std::uint64_t seed = 42;
  GaussianClassSpec data;
  double sv_tol = 1e-6;
  double tau = 1.0;
};

struct PlantSpec {
  std::string plant = "parallel_rlc";      // parallel_rlc | hvac
  std::string controller = "power_shaping";  // power_shaping | krasovskii_pi | dynamic_feedback
  ParallelRLC rlc;
  HvacParams hvac;
  double v_star = 1.0;
  double K = 1.0;
  double K_P = 1.0;
  double K_I = 1.0;
  HvacShapingGains shaping;
  DynFeedbackGains dynamic;
  Eigen::Vector2d T_star{2.5, 6.0};
  Vec initial;
  Vec u0;  // dynamic feedback only; empty means zero
};

struct TlineSpec {
  LineParams params;
  double vC1_star = 1.0;
  double K_P = 1.0;
  double K_I = 1.0;
  int M = 100;
};

struct AuditSpec {
  std::string input;  // CSV with columns t, storage, supply_rate
  std::string mode = "dissipation";  // dissipation | monotone
  double audit_tol = -1.0;           // negative selects the default tolerance
};

struct ExperimentConfig {
  Kind kind = Kind::Solve;
  std::filesystem::path base_dir;  // relative input paths resolve against this
  std::string output_dir;
  IntegratorConfig integrator;
  SolveSpec solve;
  SvmSpec svm;
  PlantSpec plant;
  TlineSpec tline;
  AuditSpec audit;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> n_per_class;
  std::optional<std::string> out_dir;
};

// Default configuration of a kind (what a subcommand runs without --config).
ExperimentConfig default_config(Kind kind);

// Parses and validates; never runs a simulation. Diagnostics name the offending field.
ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir, Diagnostics& diag);
ExperimentConfig load_config(const std::filesystem::path& path, Diagnostics& diag);

void apply_overrides(ExperimentConfig& cfg, const Overrides& ov);

// Full precondition sweep of a parsed config (dimensions, module preconditions, step limits).
void check_preconditions(const ExperimentConfig& cfg, Diagnostics& diag);

// Resolved configuration with every default filled in.
json to_json(const ExperimentConfig& cfg);

struct RunReport {
  int exit_code = kOk;
  std::string message;
  std::filesystem::path out_dir;
};

RunReport run(const ExperimentConfig& cfg, bool strict);

}  // namespace passiv::experiment
