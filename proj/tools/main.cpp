// passiv: configuration-driven experiment runner.
#include "experiment.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <iostream>
#include <thread>

namespace ex = passiv::experiment;

namespace {

struct CommonFlags {
  std::vector<std::string> configs;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool strict = false;
};

void add_common(CLI::App* app, CommonFlags& f, bool many_configs) {
  if (many_configs)
    app->add_option("--config", f.configs, "Experiment config (JSON); may be repeated")->check(CLI::ExistingFile);
  else
    app->add_option("--config", f.configs, "Experiment config (JSON)")->check(CLI::ExistingFile)->expected(1);
  app->add_option("--out", f.out, "Output directory (overrides output_dir)");
  app->add_option("--seed", f.seed, "Random seed (svm)");
  app->add_flag("--strict", f.strict, "Non-zero exit on non-convergence or audit failure");
}

void print_diagnostics(const std::string& source, const ex::Diagnostics& d) {
  std::cerr << source << ": invalid configuration\n";
  for (const auto& e : d.errors) std::cerr << "  " << e << "\n";
}

// Loads one config (or the kind's defaults) and applies command-line overrides.
std::optional<ex::ExperimentConfig> prepare(const std::string& path, std::optional<ex::Kind> expect,
                                            const CommonFlags& f, std::optional<int> n_per_class,
                                            const std::string& out_dir) {
  ex::Diagnostics diag;
  ex::ExperimentConfig cfg;
  if (path.empty()) {
    cfg = ex::default_config(*expect);
  } else {
    cfg = ex::load_config(path, diag);
    if (diag.ok() && expect && cfg.kind != *expect)
      diag.add("kind", std::string("is '") + ex::kind_name(cfg.kind) + "' but the subcommand is '" +
                           ex::kind_name(*expect) + "'");
  }
  if (!diag.ok()) {
    print_diagnostics(path.empty() ? "defaults" : path, diag);
    return std::nullopt;
  }
  ex::Overrides ov;
  ov.seed = f.seed;
  ov.n_per_class = n_per_class;
  if (!out_dir.empty()) ov.out_dir = out_dir;
  ex::apply_overrides(cfg, ov);
  if (n_per_class || f.seed) {
    ex::check_preconditions(cfg, diag);
    if (!diag.ok()) {
      print_diagnostics(path.empty() ? "defaults" : path, diag);
      return std::nullopt;
    }
  }
  return cfg;
}

int run_one(const ex::ExperimentConfig& cfg, bool strict) {
  const auto report = ex::run(cfg, strict);
  (report.exit_code == ex::kOk ? std::cout : std::cerr) << report.message << "\n";
  if (report.exit_code == ex::kOk) std::cout << "wrote " << report.out_dir.string() << "\n";
  return report.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"passiv: passivity-based optimization and control experiments"};
  app.require_subcommand(1);

  CommonFlags solve_f, svm_f, plant_f, tline_f, audit_f, run_f;
  std::optional<int> svm_n;
  int jobs = 1;
  std::vector<std::string> validate_configs;

  auto* solve_cmd = app.add_subcommand("solve", "Primal-dual flow on a convex problem");
  add_common(solve_cmd, solve_f, false);
  auto* svm_cmd = app.add_subcommand("svm", "Train a hard-margin SVM on seeded Gaussian classes");
  add_common(svm_cmd, svm_f, false);
  svm_cmd->add_option("--n", svm_n, "Points per class")->check(CLI::PositiveNumber);
  auto* plant_cmd = app.add_subcommand("plant", "Closed-loop plant simulation (parallel RLC, HVAC)");
  add_common(plant_cmd, plant_f, false);
  auto* tline_cmd = app.add_subcommand("tline", "Transmission line under boundary PI control");
  add_common(tline_cmd, tline_f, false);
  auto* audit_cmd = app.add_subcommand("audit", "Audit a storage/supply trace from CSV");
  add_common(audit_cmd, audit_f, false);
  auto* validate_cmd = app.add_subcommand("validate", "Check configs without running them");
  validate_cmd->add_option("--config", validate_configs, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* run_cmd = app.add_subcommand("run", "Run configs of any kind");
  add_common(run_cmd, run_f, true);
  run_cmd->get_option("--config")->required();
  run_cmd->add_option("--jobs", jobs, "Configs to run in parallel")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ex::kValidation;
  }

  if (validate_cmd->parsed()) {
    int code = ex::kOk;
    for (const auto& path : validate_configs) {
      ex::Diagnostics diag;
      ex::load_config(path, diag);
      if (diag.ok()) {
        std::cout << path << ": ok\n";
      } else {
        print_diagnostics(path, diag);
        code = ex::kValidation;
      }
    }
    return code;
  }

  if (run_cmd->parsed()) {
    std::vector<ex::ExperimentConfig> cfgs;
    for (const auto& path : run_f.configs) {
      // With several configs, --out is a parent directory with one subdirectory per config.
      std::string out = run_f.out;
      if (!out.empty() && run_f.configs.size() > 1)
        out = (std::filesystem::path(out) / std::filesystem::path(path).stem()).string();
      auto cfg = prepare(path, std::nullopt, run_f, std::nullopt, out);
      if (!cfg) return ex::kValidation;
      cfgs.push_back(std::move(*cfg));
    }
    std::vector<ex::RunReport> reports(cfgs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < cfgs.size(); i = next++) reports[i] = ex::run(cfgs[i], run_f.strict);
    };
    std::vector<std::thread> pool;
    const int workers = std::min<int>(jobs, static_cast<int>(cfgs.size()));
    for (int k = 1; k < workers; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    int code = ex::kOk;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      (r.exit_code == ex::kOk ? std::cout : std::cerr) << run_f.configs[i] << ": " << r.message << "\n";
      if (r.exit_code == ex::kOk) std::cout << "wrote " << r.out_dir.string() << "\n";
      code = std::max(code, r.exit_code);
    }
    return code;
  }

  struct Sub {
    CLI::App* cmd;
    CommonFlags* flags;
    ex::Kind kind;
  };
  for (const Sub& s : {Sub{solve_cmd, &solve_f, ex::Kind::Solve}, Sub{svm_cmd, &svm_f, ex::Kind::Svm},
                       Sub{plant_cmd, &plant_f, ex::Kind::Plant}, Sub{tline_cmd, &tline_f, ex::Kind::Tline},
                       Sub{audit_cmd, &audit_f, ex::Kind::Audit}}) {
    if (!s.cmd->parsed()) continue;
    const std::string path = s.flags->configs.empty() ? "" : s.flags->configs.front();
    if (path.empty() && s.kind == ex::Kind::Audit) {
      std::cerr << "audit: --config is required (the config names the input CSV)\n";
      return ex::kValidation;
    }
    auto cfg = prepare(path, s.kind, *s.flags, s.kind == ex::Kind::Svm ? svm_n : std::nullopt, s.flags->out);
    if (!cfg) return ex::kValidation;
    return run_one(*cfg, s.flags->strict);
  }
  return ex::kValidation;
}
