#include "experiment.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace passiv::experiment {

namespace {

enum class Check { Any, Positive, NonNegative };

std::string describe(double v) { return format_double(v); }

bool is_number_array(const json& j) {
  if (!j.is_array()) return false;
  for (const auto& e : j)
    if (!e.is_number()) return false;
  return true;
}

// Typed access to one JSON object with field-path diagnostics and unknown-key detection.
class Reader {
 public:
  Reader(const json* j, std::string path, Diagnostics& d) : j_(j), path_(std::move(path)), d_(d) {
    if (j_ && !j_->is_object()) {
      d_.add(path_, "must be an object");
      j_ = nullptr;
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  bool has(const std::string& key) const { return j_ && j_->contains(key); }

  double number(const std::string& key, double def, Check check = Check::Any) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_number()) {
      d_.add(field(key), "must be a number");
      return def;
    }
    const double x = v->get<double>();
    if (!std::isfinite(x)) d_.add(field(key), "must be finite");
    if (check == Check::Positive && !(x > 0.0)) d_.add(field(key), "must be > 0 (got " + describe(x) + ")");
    if (check == Check::NonNegative && !(x >= 0.0)) d_.add(field(key), "must be >= 0 (got " + describe(x) + ")");
    return x;
  }

  long long integer(const std::string& key, long long def, long long min) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_number_integer()) {
      d_.add(field(key), "must be an integer");
      return def;
    }
    const long long x = v->get<long long>();
    if (x < min) d_.add(field(key), "must be >= " + std::to_string(min) + " (got " + std::to_string(x) + ")");
    return x;
  }

  std::string text(const std::string& key, const std::string& def, const std::vector<std::string>& allowed = {}) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_string()) {
      d_.add(field(key), "must be a string");
      return def;
    }
    std::string s = v->get<std::string>();
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      d_.add(field(key), "unknown value '" + s + "' (expected one of: " + list + ")");
    }
    return s;
  }

  // nullopt when absent or malformed (malformed is reported).
  std::optional<Vec> vector(const std::string& key, Check check = Check::Any) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!is_number_array(*v)) {
      d_.add(field(key), "must be an array of numbers");
      return std::nullopt;
    }
    Vec out(static_cast<Eigen::Index>(v->size()));
    for (std::size_t i = 0; i < v->size(); ++i) {
      out[static_cast<Eigen::Index>(i)] = (*v)[i].get<double>();
      const double x = out[static_cast<Eigen::Index>(i)];
      const std::string f = field(key) + "[" + std::to_string(i) + "]";
      if (check == Check::Positive && !(x > 0.0)) d_.add(f, "must be > 0 (got " + describe(x) + ")");
      if (check == Check::NonNegative && !(x >= 0.0)) d_.add(f, "must be >= 0 (got " + describe(x) + ")");
    }
    return out;
  }

  // Array of equal-length rows; an empty array is a 0 x 0 matrix.
  std::optional<Mat> matrix(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_array()) {
      d_.add(field(key), "must be an array of rows");
      return std::nullopt;
    }
    const auto rows = static_cast<Eigen::Index>(v->size());
    Eigen::Index cols = rows == 0 ? 0 : -1;
    for (const auto& r : *v) {
      if (!is_number_array(r) || (cols >= 0 && static_cast<Eigen::Index>(r.size()) != cols)) {
        d_.add(field(key), "must be an array of equal-length numeric rows");
        return std::nullopt;
      }
      cols = static_cast<Eigen::Index>(r.size());
    }
    Mat out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index k = 0; k < cols; ++k) out(i, k) = (*v)[i][k].get<double>();
    return out;
  }

  Reader object(const std::string& key) { return Reader(raw(key), field(key), d_); }

  void finish() const {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!seen_.count(it.key())) d_.add(field(it.key()), "unknown field");
  }

  Diagnostics& diag() { return d_; }

 private:
  const json* j_;
  std::string path_;
  Diagnostics& d_;
  std::set<std::string> seen_;
};

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

// nlohmann writes non-finite values as null; keep that explicit.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ------------------------------------------------------------------ defaults

IntegratorConfig default_integrator(const ExperimentConfig& c) {
  IntegratorConfig ic;
  switch (c.kind) {
    case Kind::Solve:
      ic.step = 0.01;
      ic.max_time = 200.0;
      ic.convergence_tol = 1e-9;
      break;
    case Kind::Svm:
      ic.step = 0.005;
      ic.max_time = 600.0;
      ic.convergence_tol = 1e-10;
      ic.record_stride = 20;
      break;
    case Kind::Plant:
      if (c.plant.plant == "hvac") {
        ic.step = 0.05;
        ic.max_time = 1500.0;
        ic.record_stride = 10;
      } else {
        ic.step = 1e-3;
        ic.max_time = 60.0;
        ic.record_stride = 10;
      }
      break;
    case Kind::Tline:
      ic.step = 0.5 * max_stable_step(c.tline.params, c.tline.M);
      ic.max_time = 60.0;
      ic.record_stride = 10;
      break;
    case Kind::Audit:
      break;
  }
  return ic;
}

Vec default_plant_initial(const PlantSpec& p) {
  return p.plant == "hvac" ? Vec(Vec::Constant(4, 5.0)) : Vec(Vec::Zero(2));
}

// ------------------------------------------------------------------ blocks

InequalitySpec parse_inequality(const json& j, const std::string& path, Diagnostics& d) {
  InequalitySpec spec;
  if (!j.is_object()) {
    d.add(path, "must be an object");
    return spec;
  }
  auto it = j.find("type");
  if (it == j.end() || !it->is_string()) {
    d.add(path + ".type", "missing or not a string");
    return spec;
  }
  spec.type = it->get<std::string>();
  const auto known = registered_inequalities();
  if (spec.type != "affine" && std::find(known.begin(), known.end(), spec.type) == known.end()) {
    std::string list = "affine";
    for (const auto& k : known) list += ", " + k;
    d.add(path + ".type", "unknown inequality '" + spec.type + "' (expected one of: " + list + ")");
  }
  for (auto p = j.begin(); p != j.end(); ++p) {
    if (p.key() == "type") continue;
    std::vector<double> values;
    if (p->is_number()) {
      values.push_back(p->get<double>());
    } else if (is_number_array(*p)) {
      for (const auto& e : *p) values.push_back(e.get<double>());
    } else if (p->is_array()) {
      bool ok = true;
      for (const auto& row : *p) {
        if (!is_number_array(row)) {
          ok = false;
          break;
        }
        for (const auto& e : row) values.push_back(e.get<double>());
      }
      if (!ok) d.add(path + "." + p.key(), "must be a number, a numeric array or a matrix");
    } else {
      d.add(path + "." + p.key(), "must be a number, a numeric array or a matrix");
    }
    spec.params[p.key()] = std::move(values);
  }
  return spec;
}

ProblemSpec parse_problem(Reader r) {
  Diagnostics& d = r.diag();
  ProblemSpec ps;
  Reader obj = r.object("objective");
  const auto Q = obj.matrix("Q");
  if (!Q) {
    if (!obj.has("Q")) d.add(obj.field("Q"), "required");
    ps.n = 0;
  } else {
    ps.Q = *Q;
    ps.n = static_cast<int>(Q->rows());
  }
  ps.n = static_cast<int>(r.integer("n", ps.n, 1));
  ps.c = obj.vector("c").value_or(Vec::Zero(ps.n));
  ps.c0 = obj.number("c0", 0.0);
  obj.finish();

  Reader eq = r.object("equalities");
  ps.A = eq.matrix("A").value_or(Mat(0, ps.n));
  if (ps.A.size() == 0) ps.A.resize(0, ps.n);
  ps.b = eq.vector("b").value_or(Vec(0));
  eq.finish();

  if (const json* ineq = r.raw("inequalities")) {
    if (!ineq->is_array()) {
      d.add(r.field("inequalities"), "must be an array");
    } else {
      for (std::size_t i = 0; i < ineq->size(); ++i)
        ps.inequalities.push_back(
            parse_inequality((*ineq)[i], r.field("inequalities") + "[" + std::to_string(i) + "]", d));
    }
  }
  r.finish();
  return ps;
}

json problem_json(const ProblemSpec& ps) {
  json j;
  j["n"] = ps.n;
  j["objective"] = {{"Q", mat_json(ps.Q)}, {"c", vec_json(ps.c)}, {"c0", ps.c0}};
  j["equalities"] = {{"A", mat_json(ps.A)}, {"b", vec_json(ps.b)}};
  json ineq = json::array();
  for (const auto& s : ps.inequalities) {
    json e;
    e["type"] = s.type;
    for (const auto& [k, v] : s.params) e[k] = v;
    ineq.push_back(e);
  }
  j["inequalities"] = ineq;
  return j;
}

void parse_solve(Reader r, ExperimentConfig& cfg) {
  SolveSpec& s = cfg.solve;
  Diagnostics& d = r.diag();
  const bool inline_problem = r.has("problem");
  s.problem_file = r.text("problem_file", "");
  if (inline_problem && !s.problem_file.empty()) {
    d.add(r.field("problem"), "give either problem or problem_file, not both");
  } else if (!s.problem_file.empty()) {
    const auto path = cfg.base_dir / s.problem_file;
    std::ifstream in(path);
    if (!in) {
      d.add(r.field("problem_file"), "cannot open '" + path.string() + "'");
    } else {
      json doc = json::parse(in, nullptr, false);
      if (doc.is_discarded()) {
        d.add(r.field("problem_file"), "not valid JSON: " + path.string());
      } else {
        if (doc.is_object() && doc.contains("schema_version")) {
          if (doc["schema_version"] != kSchemaVersion)
            d.add(s.problem_file + ".schema_version", "must be " + std::to_string(kSchemaVersion));
          doc.erase("schema_version");
        }
        s.problem = parse_problem(Reader(&doc, s.problem_file, d));
      }
    }
  } else if (inline_problem) {
    s.problem = parse_problem(r.object("problem"));
  } else {
    d.add(r.field("problem"), "required (inline problem or problem_file)");
  }
  r.raw("problem");

  const int n = s.problem.n;
  const int m = static_cast<int>(s.problem.A.rows());
  const int p = static_cast<int>(s.problem.inequalities.size());
  Reader init = r.object("initial");
  s.x0 = init.vector("x").value_or(Vec::Zero(n));
  s.lam0 = init.vector("lam").value_or(Vec::Zero(m));
  s.mu0 = init.vector("mu", Check::NonNegative).value_or(Vec::Zero(p));
  init.finish();
  Reader tc = r.object("time_constants");
  s.tau_x = tc.vector("tau_x", Check::Positive).value_or(Vec::Ones(n));
  s.tau_lam = tc.vector("tau_lam", Check::Positive).value_or(Vec::Ones(m));
  s.tau_mu = tc.vector("tau_mu", Check::Positive).value_or(Vec::Ones(p));
  tc.finish();
  s.kkt_tol = r.number("kkt_tol", s.kkt_tol, Check::Positive);
  s.damping = r.number("damping", s.damping, Check::NonNegative);
  s.switch_audit_tol = r.number("switch_audit_tol", s.switch_audit_tol, Check::Positive);
  r.finish();
}

void parse_svm(Reader r, SvmSpec& s) {
  const long long seed = r.integer("seed", static_cast<long long>(s.seed), 0);
  s.seed = static_cast<std::uint64_t>(seed);
  s.data.n_per_class = static_cast<int>(r.integer("n_per_class", s.data.n_per_class, 1));
  auto point = [&](const char* key, Eigen::Vector2d& dst) {
    if (auto v = r.vector(key)) {
      if (v->size() != 2)
        r.diag().add(r.field(key), "must have 2 entries");
      else
        dst = *v;
    }
  };
  point("mean_a", s.data.mean_a);
  point("mean_b", s.data.mean_b);
  if (auto c = r.matrix("cov")) {
    if (c->rows() != 2 || c->cols() != 2)
      r.diag().add(r.field("cov"), "must be 2 x 2");
    else
      s.data.cov = *c;
  }
  s.sv_tol = r.number("sv_tol", s.sv_tol, Check::Positive);
  s.tau = r.number("tau", s.tau, Check::Positive);
  r.finish();
}

void parse_plant(Reader r, PlantSpec& s) {
  s.plant = r.text("plant", s.plant, {"parallel_rlc", "hvac"});
  const std::vector<std::string> controllers =
      s.plant == "hvac" ? std::vector<std::string>{"power_shaping", "dynamic_feedback"}
                        : std::vector<std::string>{"power_shaping", "krasovskii_pi"};
  s.controller = r.text("controller", s.controller, controllers);

  Reader params = r.object("params");
  Reader gains = r.object("gains");
  Reader targets = r.object("targets");
  if (s.plant == "hvac") {
    HvacParams& h = s.hvac;
    h.C1 = params.number("C1", h.C1, Check::Positive);
    h.C2 = params.number("C2", h.C2, Check::Positive);
    h.C3 = params.number("C3", h.C3, Check::Positive);
    h.C4 = params.number("C4", h.C4, Check::Positive);
    h.R31 = params.number("R31", h.R31, Check::Positive);
    h.R42 = params.number("R42", h.R42, Check::Positive);
    h.R34 = params.number("R34", h.R34, Check::Positive);
    h.R10 = params.number("R10", h.R10, Check::Positive);
    h.R20 = params.number("R20", h.R20, Check::Positive);
    h.cp = params.number("cp", h.cp, Check::Positive);
    h.Ts = params.number("Ts", h.Ts);
    h.Tinf = params.number("Tinf", h.Tinf);
    s.T_star[0] = targets.number("T1", s.T_star[0]);
    s.T_star[1] = targets.number("T2", s.T_star[1]);
    if (s.controller == "dynamic_feedback") {
      s.dynamic.k1 = gains.number("k1", s.dynamic.k1, Check::Positive);
      s.dynamic.kd = gains.number("kd", s.dynamic.kd, Check::NonNegative);
      s.dynamic.ki = gains.number("ki", s.dynamic.ki, Check::Positive);
    } else {
      s.shaping.k = gains.number("k", s.shaping.k, Check::Positive);
      s.shaping.k1 = gains.number("k1", s.shaping.k1, Check::Positive);
      s.shaping.k2 = gains.number("k2", s.shaping.k2, Check::Positive);
      s.shaping.alpha = gains.number("alpha", s.shaping.alpha, Check::Positive);
    }
  } else {
    ParallelRLC& p = s.rlc;
    p.R = params.number("R", p.R, Check::Positive);
    p.G = params.number("G", p.G, Check::Positive);
    p.L = params.number("L", p.L, Check::Positive);
    p.C = params.number("C", p.C, Check::Positive);
    s.v_star = targets.number("v_star", s.v_star);
    if (s.controller == "krasovskii_pi") {
      s.K_P = gains.number("K_P", s.K_P, Check::NonNegative);
      s.K_I = gains.number("K_I", s.K_I, Check::NonNegative);
    } else {
      s.K = gains.number("K", s.K, Check::NonNegative);
    }
  }
  params.finish();
  gains.finish();
  targets.finish();
  s.initial = r.vector("initial").value_or(default_plant_initial(s));
  if (s.controller == "dynamic_feedback") s.u0 = r.vector("u0").value_or(Vec::Zero(2));
  r.finish();
}

void parse_tline(Reader r, TlineSpec& s) {
  Reader params = r.object("params");
  LineParams& p = s.params;
  p.R = params.number("R", p.R, Check::Positive);
  p.L = params.number("L", p.L, Check::Positive);
  p.C = params.number("C", p.C, Check::Positive);
  p.G = params.number("G", p.G, Check::Positive);
  p.R0 = params.number("R0", p.R0, Check::Positive);
  p.C0 = params.number("C0", p.C0, Check::Positive);
  p.R1 = params.number("R1", p.R1, Check::Positive);
  p.C1 = params.number("C1", p.C1, Check::Positive);
  params.finish();
  Reader target = r.object("target");
  s.vC1_star = target.number("vC1", s.vC1_star);
  target.finish();
  Reader gains = r.object("gains");
  s.K_P = gains.number("K_P", s.K_P, Check::NonNegative);
  s.K_I = gains.number("K_I", s.K_I, Check::NonNegative);
  gains.finish();
  Reader grid = r.object("grid");
  s.M = static_cast<int>(grid.integer("M", s.M, 8));
  grid.finish();
  r.finish();
}

void parse_audit(Reader r, AuditSpec& s) {
  s.input = r.text("input", s.input);
  if (s.input.empty()) r.diag().add(r.field("input"), "required (CSV with columns t, storage, supply_rate)");
  s.mode = r.text("mode", s.mode, {"dissipation", "monotone"});
  if (r.has("audit_tol")) s.audit_tol = r.number("audit_tol", s.audit_tol, Check::Positive);
  r.finish();
}

void parse_integrator(Reader r, IntegratorConfig& ic) {
  ic.step = r.number("step", ic.step, Check::Positive);
  ic.max_time = r.number("max_time", ic.max_time, Check::Positive);
  ic.event_tol = r.number("event_tol", ic.event_tol, Check::Positive);
  ic.convergence_tol = r.number("convergence_tol", ic.convergence_tol, Check::Positive);
  ic.convergence_window = static_cast<int>(r.integer("convergence_window", ic.convergence_window, 1));
  ic.record_stride = static_cast<int>(r.integer("record_stride", ic.record_stride, 1));
  if (const json* v = r.raw("stop_on_convergence")) {
    if (v->is_boolean())
      ic.stop_on_convergence = v->get<bool>();
    else
      r.diag().add(r.field("stop_on_convergence"), "must be true or false");
  }
  r.finish();
}

json integrator_json(const IntegratorConfig& ic) {
  return {{"step", ic.step},
          {"max_time", ic.max_time},
          {"event_tol", ic.event_tol},
          {"convergence_tol", ic.convergence_tol},
          {"convergence_window", ic.convergence_window},
          {"record_stride", ic.record_stride},
          {"stop_on_convergence", ic.stop_on_convergence}};
}

}  // namespace

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Solve: return "solve";
    case Kind::Svm: return "svm";
    case Kind::Plant: return "plant";
    case Kind::Tline: return "tline";
    case Kind::Audit: return "audit";
  }
  return "?";
}

std::optional<Kind> parse_kind(const std::string& s) {
  for (Kind k : {Kind::Solve, Kind::Svm, Kind::Plant, Kind::Tline, Kind::Audit})
    if (s == kind_name(k)) return k;
  return std::nullopt;
}

ConvexProblem ProblemSpec::build() const {
  ConvexProblem prob;
  prob.n = n;
  prob.f = quadratic_function(Q, c, c0);
  prob.A = A;
  prob.b = b;
  for (const auto& s : inequalities) {
    if (s.type == "affine") {
      auto a = s.params.find("a");
      auto rhs = s.params.find("b");
      if (a == s.params.end() || rhs == s.params.end() || rhs->second.size() != 1)
        throw std::invalid_argument("affine inequality needs a (n entries) and scalar b");
      if (static_cast<int>(a->second.size()) != n)
        throw std::invalid_argument("affine inequality: a must have n entries");
      prob.g.push_back(affine_function(Eigen::Map<const Vec>(a->second.data(), n), rhs->second[0]));
    } else {
      prob.g.push_back(make_inequality(s.type, n, s.params));
    }
  }
  return prob;
}

ExperimentConfig default_config(Kind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.base_dir = ".";
  if (kind == Kind::Solve) {
    // min 1/2|x|^2 s.t. x1 + x2 = 2
    ProblemSpec& p = c.solve.problem;
    p.n = 2;
    p.Q = Mat::Identity(2, 2);
    p.c = Vec::Zero(2);
    p.A = (Mat(1, 2) << 1.0, 1.0).finished();
    p.b = Vec::Constant(1, 2.0);
    c.solve.x0 = Vec::Zero(2);
    c.solve.lam0 = Vec::Zero(1);
    c.solve.mu0 = Vec(0);
    c.solve.tau_x = Vec::Ones(2);
    c.solve.tau_lam = Vec::Ones(1);
    c.solve.tau_mu = Vec(0);
  }
  if (kind == Kind::Plant) c.plant.initial = default_plant_initial(c.plant);
  c.integrator = default_integrator(c);
  c.output_dir = std::string("passiv-out/") + kind_name(kind);
  return c;
}

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir, Diagnostics& diag) {
  ExperimentConfig cfg;
  Reader root(&doc, "", diag);
  if (!doc.is_object()) return cfg;

  const json* version = root.raw("schema_version");
  if (!version)
    diag.add("schema_version", "required (" + std::to_string(kSchemaVersion) + ")");
  else if (!version->is_number_integer() || version->get<long long>() != kSchemaVersion)
    diag.add("schema_version", "unsupported (expected " + std::to_string(kSchemaVersion) + ")");

  const std::string kind_text = root.text("kind", "", {"solve", "svm", "plant", "tline", "audit"});
  const auto kind = parse_kind(kind_text);
  if (kind_text.empty()) diag.add("kind", "required");
  if (!kind) return cfg;

  cfg = default_config(*kind);
  cfg.base_dir = base_dir;
  cfg.output_dir = root.text("output_dir", cfg.output_dir);
  Reader block = root.object(kind_name(*kind));
  switch (*kind) {
    case Kind::Solve: parse_solve(block, cfg); break;
    case Kind::Svm: parse_svm(block, cfg.svm); break;
    case Kind::Plant: parse_plant(block, cfg.plant); break;
    case Kind::Tline: parse_tline(block, cfg.tline); break;
    case Kind::Audit: parse_audit(block, cfg.audit); break;
  }
  if (*kind == Kind::Solve && !doc.contains("solve")) diag.add("solve", "required");
  if (*kind == Kind::Audit && !doc.contains("audit")) diag.add("audit", "required");
  if (diag.ok()) cfg.integrator = default_integrator(cfg);
  parse_integrator(root.object("integrator"), cfg.integrator);
  root.finish();
  if (diag.ok()) check_preconditions(cfg, diag);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, Diagnostics& diag) {
  std::ifstream in(path);
  if (!in) {
    diag.add("config", "cannot open '" + path.string() + "'");
    return {};
  }
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) {
    diag.add("config", "not valid JSON: " + path.string());
    return {};
  }
  return parse_config(doc, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path(), diag);
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& ov) {
  if (ov.seed) cfg.svm.seed = *ov.seed;
  if (ov.n_per_class) cfg.svm.data.n_per_class = *ov.n_per_class;
  if (ov.out_dir) cfg.output_dir = *ov.out_dir;
}

void check_preconditions(const ExperimentConfig& cfg, Diagnostics& d) {
  try {
    cfg.integrator.validate();
  } catch (const std::exception& e) {
    d.add("integrator", e.what());
  }

  switch (cfg.kind) {
    case Kind::Solve: {
      const SolveSpec& s = cfg.solve;
      const ProblemSpec& p = s.problem;
      const int n = p.n;
      const std::string base = s.problem_file.empty() ? "solve.problem" : s.problem_file;
      if (p.Q.rows() != n || p.Q.cols() != n) {
        d.add(base + ".objective.Q", "must be n x n with n = " + std::to_string(n));
        return;
      }
      if ((p.Q - p.Q.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * std::max(1.0, p.Q.lpNorm<Eigen::Infinity>()))
        d.add(base + ".objective.Q", "must be symmetric");
      if (p.c.size() != n) d.add(base + ".objective.c", "must have n = " + std::to_string(n) + " entries");
      if (p.A.cols() != n && p.A.rows() > 0) d.add(base + ".equalities.A", "must have n columns");
      if (p.b.size() != p.A.rows()) d.add(base + ".equalities.b", "must have one entry per row of A");
      const int m = static_cast<int>(p.A.rows());
      const int q = static_cast<int>(p.inequalities.size());
      if (s.x0.size() != n) d.add("solve.initial.x", "must have n entries");
      if (s.lam0.size() != m) d.add("solve.initial.lam", "must have one entry per equality");
      if (s.mu0.size() != q) d.add("solve.initial.mu", "must have one entry per inequality");
      if (s.tau_x.size() != n) d.add("solve.time_constants.tau_x", "must have n entries");
      if (s.tau_lam.size() != m) d.add("solve.time_constants.tau_lam", "must have one entry per equality");
      if (s.tau_mu.size() != q) d.add("solve.time_constants.tau_mu", "must have one entry per inequality");
      if (!d.ok()) return;
      ConvexProblem prob;
      for (int i = 0; i < q; ++i) {
        try {
          ProblemSpec one = p;
          one.inequalities = {p.inequalities[static_cast<std::size_t>(i)]};
          one.build();
        } catch (const std::exception& e) {
          d.add(base + ".inequalities[" + std::to_string(i) + "]", e.what());
        }
      }
      if (!d.ok()) return;
      prob = p.build();
      try {
        prob.validate();
      } catch (const std::exception& e) {
        d.add(base, e.what());
        return;
      }
      // Convexity evidence at the initial point and a few deterministic samples.
      std::vector<Vec> samples{s.x0};
      SplitMix64 rng(1);
      for (int k = 0; k < 8; ++k)
        samples.push_back(s.x0 + Vec(Vec::NullaryExpr(n, [&] { return rng.uniform(-1.0, 1.0); })));
      const auto check = check_problem(prob, samples);
      if (!(check.min_f_hessian_eig > 0.0))
        d.add(base + ".objective.Q", "Hessian must be positive definite (min eigenvalue " +
                                          describe(check.min_f_hessian_eig) + ")");
      if (check.min_g_hessian_eig < -1e-10)
        d.add(base + ".inequalities", "an inequality is not convex (min Hessian eigenvalue " +
                                          describe(check.min_g_hessian_eig) + ")");
      break;
    }
    case Kind::Svm: {
      if (Eigen::LLT<Eigen::Matrix2d>(cfg.svm.data.cov).info() != Eigen::Success ||
          std::abs(cfg.svm.data.cov(0, 1) - cfg.svm.data.cov(1, 0)) > 1e-12)
        d.add("svm.cov", "must be symmetric positive definite");
      if ((cfg.svm.data.mean_a - cfg.svm.data.mean_b).norm() == 0.0)
        d.add("svm.mean_b", "must differ from mean_a");
      break;
    }
    case Kind::Plant: {
      const PlantSpec& s = cfg.plant;
      const int n = s.plant == "hvac" ? 4 : 2;
      if (s.initial.size() != n) d.add("plant.initial", "must have " + std::to_string(n) + " entries");
      if (s.controller == "dynamic_feedback" && s.u0.size() != 2) d.add("plant.u0", "must have 2 entries");
      if (s.plant == "hvac") {
        try {
          hvac_equilibrium(s.hvac, s.T_star[0], s.T_star[1]);
        } catch (const std::exception& e) {
          d.add("plant.targets", e.what());
        }
        if (s.initial.size() == 4 && (std::abs(s.initial[0] - s.hvac.Ts) < 1e-9 || std::abs(s.initial[1] - s.hvac.Ts) < 1e-9))
          d.add("plant.initial", "zone temperatures must differ from Ts (actuation vanishes there)");
      }
      break;
    }
    case Kind::Tline: {
      try {
        check_step(cfg.tline.params, cfg.tline.M, cfg.integrator.step);
      } catch (const std::exception& e) {
        d.add("integrator.step", e.what());
      }
      break;
    }
    case Kind::Audit: {
      const auto path = cfg.base_dir / cfg.audit.input;
      try {
        const CsvTable t = read_csv(path);
        t.column("t");
        t.column("storage");
        if (cfg.audit.mode == "dissipation") t.column("supply_rate");
        if (t.rows.size() < 2) d.add("audit.input", "needs at least two samples");
      } catch (const std::exception& e) {
        d.add("audit.input", std::string(e.what()));
      }
      break;
    }
  }
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = kind_name(cfg.kind);
  j["output_dir"] = cfg.output_dir;
  j["integrator"] = integrator_json(cfg.integrator);
  json b;
  switch (cfg.kind) {
    case Kind::Solve: {
      const SolveSpec& s = cfg.solve;
      if (!s.problem_file.empty()) b["problem_file"] = s.problem_file;
      b["problem"] = problem_json(s.problem);
      b["initial"] = {{"x", vec_json(s.x0)}, {"lam", vec_json(s.lam0)}, {"mu", vec_json(s.mu0)}};
      b["time_constants"] = {{"tau_x", vec_json(s.tau_x)}, {"tau_lam", vec_json(s.tau_lam)}, {"tau_mu", vec_json(s.tau_mu)}};
      b["kkt_tol"] = s.kkt_tol;
      b["damping"] = s.damping;
      b["switch_audit_tol"] = s.switch_audit_tol;
      break;
    }
    case Kind::Svm: {
      const SvmSpec& s = cfg.svm;
      b["seed"] = s.seed;
      b["n_per_class"] = s.data.n_per_class;
      b["mean_a"] = vec_json(s.data.mean_a);
      b["mean_b"] = vec_json(s.data.mean_b);
      b["cov"] = mat_json(s.data.cov);
      b["sv_tol"] = s.sv_tol;
      b["tau"] = s.tau;
      break;
    }
    case Kind::Plant: {
      const PlantSpec& s = cfg.plant;
      b["plant"] = s.plant;
      b["controller"] = s.controller;
      if (s.plant == "hvac") {
        const HvacParams& h = s.hvac;
        b["params"] = {{"C1", h.C1}, {"C2", h.C2}, {"C3", h.C3}, {"C4", h.C4}, {"R31", h.R31},
                       {"R42", h.R42}, {"R34", h.R34}, {"R10", h.R10}, {"R20", h.R20}, {"cp", h.cp},
                       {"Ts", h.Ts},   {"Tinf", h.Tinf}};
        b["targets"] = {{"T1", s.T_star[0]}, {"T2", s.T_star[1]}};
        if (s.controller == "dynamic_feedback")
          b["gains"] = {{"k1", s.dynamic.k1}, {"kd", s.dynamic.kd}, {"ki", s.dynamic.ki}};
        else
          b["gains"] = {{"k", s.shaping.k}, {"k1", s.shaping.k1}, {"k2", s.shaping.k2}, {"alpha", s.shaping.alpha}};
      } else {
        b["params"] = {{"R", s.rlc.R}, {"G", s.rlc.G}, {"L", s.rlc.L}, {"C", s.rlc.C}};
        b["targets"] = {{"v_star", s.v_star}};
        if (s.controller == "krasovskii_pi")
          b["gains"] = {{"K_P", s.K_P}, {"K_I", s.K_I}};
        else
          b["gains"] = {{"K", s.K}};
      }
      b["initial"] = vec_json(s.initial);
      if (s.controller == "dynamic_feedback") b["u0"] = vec_json(s.u0);
      break;
    }
    case Kind::Tline: {
      const TlineSpec& s = cfg.tline;
      const LineParams& p = s.params;
      b["params"] = {{"R", p.R}, {"L", p.L}, {"C", p.C}, {"G", p.G}, {"R0", p.R0}, {"C0", p.C0}, {"R1", p.R1}, {"C1", p.C1}};
      b["target"] = {{"vC1", s.vC1_star}};
      b["gains"] = {{"K_P", s.K_P}, {"K_I", s.K_I}};
      b["grid"] = {{"M", s.M}};
      break;
    }
    case Kind::Audit: {
      b["input"] = cfg.audit.input;
      b["mode"] = cfg.audit.mode;
      b["audit_tol"] = cfg.audit.audit_tol < 0.0 ? json("default") : json(cfg.audit.audit_tol);
      break;
    }
  }
  j[kind_name(cfg.kind)] = b;
  return j;
}

// ---------------------------------------------------------------------- running

namespace {

json kkt_json(const KKTReport& k, double tol) {
  return {{"stationarity", k.stationarity},
          {"eq_violation", k.eq_violation},
          {"ineq_violation", k.ineq_violation},
          {"comp_slack", k.comp_slack},
          {"dual_feas", num(k.dual_feas)},
          {"tol", tol},
          {"optimal", k.optimal(tol)}};
}

json audit_json(const AuditReport& r) {
  return {{"verdict", r.pass ? "PASS" : "FAIL"},
          {"min_margin", r.min_margin},
          {"worst_time", r.worst_time},
          {"audit_tol", r.audit_tol}};
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<std::string> indexed(const std::string& prefix, int count) {
  std::vector<std::string> names;
  for (int i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

struct Outcome {
  bool converged = true;
  bool audit_pass = true;
  json result;
  std::string message;
};

Outcome run_solve(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  const SolveSpec& s = cfg.solve;
  const ConvexProblem prob = s.problem.build();
  const int n = prob.n, m = prob.m(), p = prob.p();
  const TimeConstants tc{s.tau_x, s.tau_lam, s.tau_mu};
  SolveOptions opts;
  opts.kkt_tol = s.kkt_tol;
  if (s.damping > 0.0) {
    const double k = s.damping;
    opts.rates = [&prob, &tc, k](const FlowState& st) { return damping_injection_rhs(prob, st, k, tc); };
  }
  const SolveResult res = solve(prob, FlowState{s.x0, s.lam0, s.mu0}, tc, cfg.integrator, opts);
  const auto switches = storage_switch_audit(res.storage, s.switch_audit_tol);
  const auto monotone = monotone_audit(res.storage.times, res.storage.storage);

  std::vector<std::string> cols = indexed("x", n);
  for (auto& c : indexed("lam", m)) cols.push_back(c);
  for (auto& c : indexed("mu", p)) cols.push_back(c);
  write_trajectory_csv(res.traj, out / "trajectory.csv", cols);
  write_events_csv(res.traj, out / "events.csv");
  write_storage_csv(res.storage, out / "storage.csv");

  Outcome o;
  o.converged = res.converged;
  o.audit_pass = switches.pass && monotone.report.pass;
  const bool ok = res.converged && res.kkt_ok && o.audit_pass;
  o.result["verdict"] = ok ? "PASS" : "FAIL";
  o.result["converged"] = res.converged;
  o.result["iterations"] = res.traj.steps;
  o.result["samples"] = res.traj.size();
  o.result["final_time"] = res.traj.final_time();
  o.result["switch_count"] = res.switch_count;
  o.result["kkt"] = kkt_json(res.kkt, s.kkt_tol);
  o.result["solution"] = {{"x", vec_json(res.final_state.x)},
                          {"lam", vec_json(res.final_state.lam)},
                          {"mu", vec_json(res.final_state.mu)}};
  o.result["audit"] = {
      {"storage", audit_json(monotone.report)},
      {"switches",
       {{"verdict", switches.pass ? "PASS" : "FAIL"},
        {"activations", switches.activations},
        {"deactivations", switches.deactivations},
        {"max_activation_jump", num(switches.max_activation_jump)},
        {"max_deactivation_jump", switches.max_deactivation_jump},
        {"strict_decrease", switches.strict_decrease}}}};
  o.result["diagnostics"] = res.diagnostics;
  std::ostringstream msg;
  msg << "solve: " << (ok ? "PASS" : "FAIL") << ", stationarity " << format_double(res.kkt.stationarity)
      << ", " << res.switch_count << " switches";
  if (!res.diagnostics.empty()) msg << " (" << res.diagnostics << ")";
  o.message = msg.str();
  return o;
}

Outcome run_svm(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  const SvmSpec& s = cfg.svm;
  const Dataset data = generate_gaussian_classes(s.seed, s.data);
  const int N = static_cast<int>(data.size());
  TimeConstants tc{Vec::Constant(3, s.tau), Vec(0), Vec::Constant(N, s.tau)};
  const SvmRun run = train_svm(data, tc, cfg.integrator, s.sv_tol);
  const auto& traj = run.solve.traj;

  write_dataset_csv(data, out / "dataset.csv");
  {
    CsvWriter w(out / "trajectory.csv", {"t", "beta1", "beta2", "beta0"});
    for (std::size_t k = 0; k < traj.size(); ++k)
      w.row(traj.times[k], {traj.states[k][0], traj.states[k][1], traj.states[k][2]});
  }
  {
    std::vector<std::string> header{"t"};
    for (auto& c : indexed("mu", N)) header.push_back(c);
    CsvWriter w(out / "mu.csv", header);
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const Vec mu = traj.states[k].tail(N);
      w.row(traj.times[k], std::vector<double>(mu.data(), mu.data() + N));
    }
  }
  write_events_csv(traj, out / "events.csv");
  write_storage_csv(run.solve.storage, out / "storage.csv");
  const auto switches = storage_switch_audit(run.solve.storage);
  const auto monotone = monotone_audit(run.solve.storage.times, run.solve.storage.storage);

  Outcome o;
  o.converged = run.solve.converged;
  o.audit_pass = switches.pass && monotone.report.pass;
  const auto& sv = run.svs;
  const bool ok = run.solve.converged && run.solve.kkt_ok && o.audit_pass && sv.indices.size() >= 2;
  o.result["verdict"] = ok ? "PASS" : "FAIL";
  o.result["support_vector_indices"] = sv.indices;
  o.result["beta"] = vec_json(sv.plane.beta);
  o.result["beta0"] = sv.plane.beta0;
  o.result["representer_residual"] = sv.representer_residual;
  o.result["margin"] = sv.plane.margin();
  o.result["label_balance"] = sv.label_balance;
  o.result["max_support_g"] = sv.max_support_g;
  o.result["min_functional_margin"] = sv.min_functional_margin;
  o.result["converged"] = run.solve.converged;
  o.result["iterations"] = traj.steps;
  o.result["final_time"] = traj.final_time();
  o.result["switch_count"] = run.solve.switch_count;
  o.result["kkt"] = kkt_json(run.solve.kkt, 1e-6);
  o.result["audit"] = {{"storage", audit_json(monotone.report)},
                       {"switches", {{"verdict", switches.pass ? "PASS" : "FAIL"},
                                     {"activations", switches.activations},
                                     {"deactivations", switches.deactivations}}}};
  o.result["dataset_rows"] = N;
  std::ostringstream msg;
  msg << "svm: " << (ok ? "PASS" : "FAIL") << ", " << sv.indices.size() << " support vectors, margin "
      << format_double(sv.plane.margin());
  if (!run.solve.diagnostics.empty()) msg << " (" << run.solve.diagnostics << ")";
  o.message = msg.str();
  return o;
}

Outcome run_plant(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  const PlantSpec& s = cfg.plant;
  ClosedLoopRun run;
  Vec target;
  json extra;
  if (s.plant == "hvac") {
    const auto eq = hvac_equilibrium(s.hvac, s.T_star[0], s.T_star[1]);
    const Eigen::Vector4d T0 = s.initial;
    if (s.controller == "dynamic_feedback")
      run = simulate_dyn_feedback(hvac_dyn_feedback_system(s.hvac), eq.T, s.dynamic, T0, s.u0, cfg.integrator);
    else
      run = simulate_hvac_shaping(s.hvac, eq, s.shaping, T0, cfg.integrator);
    target = eq.T.head<2>();
    extra["equilibrium"] = {{"T", vec_json(eq.T)}, {"u", vec_json(eq.u)}};
  } else {
    const auto eq = prlc_equilibrium(s.rlc, s.v_star);
    const Eigen::Vector2d x0 = s.initial;
    if (s.controller == "krasovskii_pi")
      run = simulate_prlc_pi(s.rlc, s.v_star, s.K_P, s.K_I, x0, cfg.integrator);
    else
      run = simulate_prlc_power_shaping(s.rlc, s.v_star, s.K, x0, cfg.integrator);
    target = Eigen::Vector2d(eq.i_star, s.v_star);
    extra["equilibrium"] = {{"i_star", eq.i_star}, {"v_star", s.v_star}, {"Vs_star", eq.Vs_star}};
    extra["shaping_certificate"] = s.rlc.shaping_certificate();
  }
  std::vector<std::string> cols = run.columns;
  write_trajectory_csv(run.traj, out / "trajectory.csv", cols);
  write_storage_csv(run.audit.trace, out / "lyapunov.csv");

  const Vec xf = run.traj.final_state();
  const int nt = static_cast<int>(target.size());
  const double err = (xf.head(nt) - target).lpNorm<Eigen::Infinity>();
  Outcome o;
  o.converged = steady_state(run.traj, cfg.integrator).has_value();
  o.audit_pass = run.audit.report.pass;
  o.result["verdict"] = o.converged && o.audit_pass ? "PASS" : "FAIL";
  o.result["converged"] = o.converged;
  o.result["final_state"] = vec_json(xf);
  o.result["target_error"] = err;
  o.result["iterations"] = run.traj.steps;
  o.result["final_time"] = run.traj.final_time();
  o.result["lyapunov"] = audit_json(run.audit.report);
  for (auto& [k, v] : extra.items()) o.result[k] = v;
  o.result["warnings"] = run.warnings;
  std::ostringstream msg;
  msg << "plant " << s.plant << "/" << s.controller << ": " << (o.converged && o.audit_pass ? "PASS" : "FAIL")
      << ", target error " << format_double(err) << ", Lyapunov trace " << (o.audit_pass ? "monotone" : "NOT monotone");
  for (const auto& w : run.warnings) msg << "\nwarning: " << w;
  o.message = msg.str();
  return o;
}

Outcome run_tline(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  const TlineSpec& s = cfg.tline;
  const LineRun run = simulate_line_pi(s.params, s.vC1_star, s.K_P, s.K_I, LineState::zero(s.M), cfg.integrator);
  write_space_time_csv(run.traj, s.M, out / "space_time.csv");
  write_storage_csv(run.audit.trace, out / "lyapunov.csv");

  const double d0 = line_distance_norm(s.params, LineState::unpack(run.traj.states.front(), s.M), run.eq);
  const double d1 = line_distance_norm(s.params, LineState::unpack(run.traj.final_state(), s.M), run.eq);
  const auto compat = boundary_compatibility(s.params);
  const auto obstacle = dissipation_obstacle_report(s.params, s.vC1_star, s.M);
  const auto& a = run.adm;

  Outcome o;
  o.converged = steady_state(run.traj, cfg.integrator).has_value();
  o.audit_pass = run.audit.report.pass;
  o.result["verdict"] = o.converged && o.audit_pass ? "PASS" : "FAIL";
  o.result["converged"] = o.converged;
  o.result["iterations"] = run.traj.steps;
  o.result["final_time"] = run.traj.final_time();
  o.result["initial_distance"] = d0;
  o.result["final_distance"] = d1;
  o.result["equilibrium"] = {{"I0_star", run.eq.I0_star}, {"i0_star", run.eq.i0_star},
                             {"vC0_star", run.eq.vC0_star}, {"vC1_star", run.eq.vC1_star}};
  o.result["lyapunov"] = audit_json(run.audit.report);
  o.result["admissible"] = {{"tau", a.tau},       {"zeta", a.zeta},   {"lambda_prime", a.lambda_prime},
                            {"lambda", a.lambda}, {"alpha", a.alpha}, {"beta", a.beta},
                            {"m2", a.m2},         {"theta", a.theta}, {"unit_lambda_feasible", a.unit_lambda_feasible()}};
  o.result["boundary_compatibility"] = {{"m2_from_load", compat.m2_from_load}, {"m2_from_line", compat.m2_from_line},
                                        {"theta_load", compat.theta_load},     {"theta_source", compat.theta_source},
                                        {"ok", compat.ok}};
  o.result["dissipation_obstacle"] = {{"supply", obstacle.supply}, {"dissipation", obstacle.dissipation},
                                      {"relative_mismatch", num(obstacle.relative_mismatch)}};
  std::ostringstream msg;
  msg << "tline: " << (o.converged && o.audit_pass ? "PASS" : "FAIL") << ", distance " << format_double(d0)
      << " -> " << format_double(d1) << ", Lyapunov trace " << (o.audit_pass ? "monotone" : "NOT monotone");
  o.message = msg.str();
  return o;
}

Outcome run_audit(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  const CsvTable t = read_csv(cfg.base_dir / cfg.audit.input);
  const auto ct = t.column("t");
  const auto cs = t.column("storage");
  std::vector<double> times, storage, supply;
  for (const auto& row : t.rows) {
    times.push_back(row[ct]);
    storage.push_back(row[cs]);
  }
  AuditResult res;
  if (cfg.audit.mode == "monotone") {
    res = monotone_audit(times, storage, cfg.audit.audit_tol);
  } else {
    const auto cu = t.column("supply_rate");
    for (const auto& row : t.rows) supply.push_back(row[cu]);
    res = passivity_audit_series(times, storage, supply, cfg.audit.audit_tol);
  }
  write_storage_csv(res.trace, out / "storage.csv");
  write_audit_json(res.report, out / "audit.json");
  Outcome o;
  o.audit_pass = res.report.pass;
  o.result["verdict"] = res.report.pass ? "PASS" : "FAIL";
  o.result["audit"] = audit_json(res.report);
  o.result["samples"] = times.size();
  o.message = std::string("audit (") + cfg.audit.mode + "): " + (res.report.pass ? "PASS" : "FAIL") +
              ", min margin " + format_double(res.report.min_margin) + " at t=" + format_double(res.report.worst_time);
  return o;
}

}  // namespace

RunReport run(const ExperimentConfig& cfg, bool strict) {
  RunReport report;
  report.out_dir = cfg.output_dir;
  try {
    std::filesystem::create_directories(report.out_dir);
    Outcome o;
    switch (cfg.kind) {
      case Kind::Solve: o = run_solve(cfg, report.out_dir); break;
      case Kind::Svm: o = run_svm(cfg, report.out_dir); break;
      case Kind::Plant: o = run_plant(cfg, report.out_dir); break;
      case Kind::Tline: o = run_tline(cfg, report.out_dir); break;
      case Kind::Audit: o = run_audit(cfg, report.out_dir); break;
    }
    json summary;
    summary["schema_version"] = kSchemaVersion;
    summary["kind"] = kind_name(cfg.kind);
    summary["config"] = to_json(cfg);
    summary["result"] = o.result;
    write_json(summary, report.out_dir / "summary.json");
    report.message = o.message;
    if (strict && !o.converged) {
      report.exit_code = kDivergence;
      report.message += "\nerror: not converged (--strict)";
    } else if (strict && !o.audit_pass) {
      report.exit_code = kAuditFailure;
      report.message += "\nerror: audit failed (--strict)";
    }
  } catch (const DivergenceError& e) {
    report.exit_code = kDivergence;
    report.message = std::string("error: diverged at t=") + format_double(e.time()) + ": " + e.what();
  } catch (const ClampError& e) {
    report.exit_code = kDivergence;
    report.message = std::string("error: ") + e.what();
  } catch (const std::invalid_argument& e) {
    report.exit_code = kValidation;
    report.message = std::string("error: ") + e.what();
  } catch (const std::exception& e) {
    report.exit_code = kDivergence;
    report.message = std::string("error: ") + e.what();
  }
  return report;
}

}  // namespace passiv::experiment
