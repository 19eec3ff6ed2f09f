#include "passiv/ode.hpp"

#include "passiv/csv.hpp"

#include <cmath>
#include <algorithm>

namespace passiv {

namespace {

Vec rk4_from(const VectorField& rhs, double t, const Vec& x, const Vec& k1, double h) {
  Vec k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
  Vec k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
  Vec k4 = rhs(t + h, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

double inf_norm(const Vec& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

int sign_of(double v) { return (v > 0) - (v < 0); }

// A guard resting exactly at zero fires when it turns negative, so a clamped
// component that starts a step at zero is still localized.
bool crossed(double s0, double s1) {
  int a = sign_of(s0);
  if (a == 0) return s1 < 0.0;
  return sign_of(s1) != a;
}

bool any_crossed(const Vec& s0, const Vec& s1) {
  for (Eigen::Index i = 0; i < s0.size(); ++i)
    if (crossed(s0[i], s1[i])) return true;
  return false;
}

// Largest |guard| among the guards crossed between s0 and s1.
double worst_crossed(const Vec& s0, const Vec& s1) {
  double w = 0.0;
  for (Eigen::Index i = 0; i < s0.size(); ++i)
    if (crossed(s0[i], s1[i])) w = std::max(w, std::abs(s1[i]));
  return w;
}

}  // namespace

void IntegratorConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string("integrator.") + name + " must be finite and > 0");
  };
  positive(step, "step");
  positive(max_time, "max_time");
  positive(event_tol, "event_tol");
  positive(convergence_tol, "convergence_tol");
  if (convergence_window < 1) throw std::invalid_argument("integrator.convergence_window must be >= 1");
  if (record_stride < 1) throw std::invalid_argument("integrator.record_stride must be >= 1");
}

Vec rk4_step(const VectorField& rhs, double t, const Vec& x, double h) {
  return rk4_from(rhs, t, x, rhs(t, x), h);
}

Trajectory integrate(const VectorField& rhs, const Vec& x0, const IntegratorConfig& config,
                     const IntegrateOptions& options) {
  config.validate();
  if (!x0.allFinite()) throw std::invalid_argument("initial state is not finite");
  for (int idx : options.clamp_nonnegative)
    if (idx < 0 || idx >= x0.size()) throw std::invalid_argument("clamp index out of range");

  const GuardSet& guards = options.guards;
  const bool use_guards = !guards.empty();

  Trajectory traj;
  double t = 0.0;
  Vec x = x0;
  Vec f = rhs(t, x);
  if (!f.allFinite()) throw DivergenceError("vector field not finite at initial state", t, x);
  traj.times.push_back(t);
  traj.states.push_back(x);
  traj.rate_norms.push_back(inf_norm(f));

  Vec s0;
  if (use_guards) {
    s0 = guards.values(x);
    if (static_cast<std::size_t>(s0.size()) != guards.tags.size())
      throw std::invalid_argument("guard values and tags differ in size");
  }

  const double end_slack = 1e-12 * config.step;
  long step_count = 0;
  int quiet_samples = 0;

  while (config.max_time - t > end_slack) {
    double h = std::min(config.step, config.max_time - t);
    Vec x1 = rk4_from(rhs, t, x, f, h);
    if (!x1.allFinite()) throw DivergenceError("state became non-finite", t, x);

    std::vector<Event> step_events;
    if (use_guards) {
      Vec s1 = guards.values(x1);
      if (any_crossed(s0, s1)) {
        // Joint bisection on the step length: the right end has at least one guard crossed,
        // the left end none. Every guard is checked at each midpoint, so a guard that dips
        // through zero inside the full step and recovers is still caught.
        double a = 0.0, b = h;
        for (int it = 0; it < 200; ++it) {
          if (b - a <= config.event_tol && worst_crossed(s0, s1) <= config.event_tol) break;
          const double mid = 0.5 * (a + b);
          if (mid <= a || mid >= b) break;
          Vec xm = rk4_from(rhs, t, x, f, mid);
          if (!xm.allFinite()) throw DivergenceError("state became non-finite", t, x);
          Vec sm = guards.values(xm);
          if (any_crossed(s0, sm)) {
            b = mid;
            x1 = std::move(xm);
            s1 = std::move(sm);
          } else {
            a = mid;
          }
        }
        h = b;
        for (Eigen::Index i = 0; i < s0.size(); ++i) {
          if (!crossed(s0[i], s1[i])) continue;
          int dir = sign_of(s1[i]) != 0 ? sign_of(s1[i]) : -sign_of(s0[i]);
          step_events.push_back({t + h, guards.tags[static_cast<std::size_t>(i)], dir});
        }
      }
    }

    for (int idx : options.clamp_nonnegative) {
      if (x1[idx] >= 0.0) continue;
      if (x1[idx] < -config.event_tol)
        throw ClampError("component " + std::to_string(idx) + " undershot zero by " +
                         format_double(-x1[idx]) + " at t=" + format_double(t + h));
      x1[idx] = 0.0;
    }

    if (!step_events.empty() && traj.times.back() < t) {
      // keep the pre-event state so mode changes can be audited from both sides
      traj.times.push_back(t);
      traj.states.push_back(x);
      traj.rate_norms.push_back(inf_norm(f));
    }

    t += h;
    x = std::move(x1);
    f = rhs(t, x);
    if (!f.allFinite()) throw DivergenceError("vector field became non-finite", t, x);
    if (use_guards) s0 = guards.values(x);
    ++step_count;

    const bool last = config.max_time - t <= end_slack;
    const bool record = !step_events.empty() || last || step_count % config.record_stride == 0;
    if (!record) continue;

    traj.times.push_back(t);
    traj.states.push_back(x);
    const double rate = inf_norm(f);
    traj.rate_norms.push_back(rate);
    for (auto& e : step_events) traj.events.push_back(std::move(e));

    if (config.stop_on_convergence) {
      quiet_samples = rate < config.convergence_tol ? quiet_samples + 1 : 0;
      if (quiet_samples >= config.convergence_window) break;
    }
  }
  traj.steps = step_count;
  return traj;
}

Vec finite_diff_gradient(const ScalarOracle& f, const Vec& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
  Vec grad(x.size());
  Vec xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    xp[k] = x[k] + h;
    const double fp = f(xp);
    xp[k] = x[k] - h;
    const double fm = f(xp);
    xp[k] = x[k];
    grad[k] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

Mat finite_diff_jacobian(const VectorOracle& f, const Vec& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
  Vec xp = x;
  Mat jac;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    xp[k] = x[k] + h;
    Vec fp = f(xp);
    xp[k] = x[k] - h;
    Vec fm = f(xp);
    xp[k] = x[k];
    if (k == 0) jac.resize(fp.size(), x.size());
    jac.col(k) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

std::optional<Vec> steady_state(const Trajectory& traj, const IntegratorConfig& config) {
  if (traj.empty()) throw std::invalid_argument("steady_state needs a nonempty trajectory");
  const auto n = traj.rate_norms.size();
  const auto window = static_cast<std::size_t>(config.convergence_window);
  if (n < window) return std::nullopt;
  for (std::size_t k = n - window; k < n; ++k)
    if (!(traj.rate_norms[k] < config.convergence_tol)) return std::nullopt;
  return traj.final_state();
}

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path,
                          const std::vector<std::string>& column_names) {
  const auto dim = traj.empty() ? 0 : static_cast<std::size_t>(traj.states.front().size());
  std::vector<std::string> header{"t"};
  for (std::size_t k = 0; k < dim; ++k)
    header.push_back(k < column_names.size() ? column_names[k] : "x" + std::to_string(k));
  CsvWriter out(path, header);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const Vec& s = traj.states[k];
    out.row(traj.times[k], std::vector<double>(s.data(), s.data() + s.size()));
  }
}

void write_events_csv(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "t,tag\n";
  for (const auto& e : traj.events)
    out << format_double(e.time) << ',' << e.tag << (e.direction > 0 ? ":up" : ":down") << '\n';
}

}  // namespace passiv
