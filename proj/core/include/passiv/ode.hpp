#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace passiv {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using VectorField = std::function<Vec(double t, const Vec& x)>;
using ScalarOracle = std::function<double(const Vec& x)>;
using VectorOracle = std::function<Vec(const Vec& x)>;

struct Event {
  double time = 0.0;
  std::string tag;
  int direction = 0;  // +1 guard went - -> +, -1 for + -> -
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<double> rate_norms;  // ||rhs||_inf at each sample
  std::vector<Event> events;
  long steps = 0;  // accepted RK4 steps, including shortened event steps

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  const Vec& final_state() const { return states.back(); }
  double final_time() const { return times.back(); }
};

struct IntegratorConfig {
  double step = 1e-3;
  double max_time = 10.0;
  double event_tol = 1e-10;
  double convergence_tol = 1e-8;
  int convergence_window = 10;
  // Only every record_stride-th step is stored (events and the final step always are).
  int record_stride = 1;
  bool stop_on_convergence = false;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct GuardSet {
  // Returns one value per tag; an event fires when a component changes sign
  // (a component sitting exactly at zero fires when it turns negative).
  VectorOracle values;
  std::vector<std::string> tags;

  bool empty() const { return tags.empty(); }
};

struct IntegrateOptions {
  GuardSet guards;
  std::vector<int> clamp_nonnegative;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double time, Vec last_finite)
      : std::runtime_error(what), time_(time), last_finite_(std::move(last_finite)) {}
  double time() const { return time_; }
  const Vec& last_finite_state() const { return last_finite_; }

 private:
  double time_;
  Vec last_finite_;
};

// Raised when a clamped component undershoots zero by more than event_tol.
class ClampError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Vec rk4_step(const VectorField& rhs, double t, const Vec& x, double h);

Trajectory integrate(const VectorField& rhs, const Vec& x0, const IntegratorConfig& config,
                     const IntegrateOptions& options = {});

Vec finite_diff_gradient(const ScalarOracle& f, const Vec& x, double h);
Mat finite_diff_jacobian(const VectorOracle& f, const Vec& x, double h);

// Final state if the recorded RHS norm stayed below convergence_tol over the
// last convergence_window samples, otherwise nullopt.
std::optional<Vec> steady_state(const Trajectory& traj, const IntegratorConfig& config);

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path,
                          const std::vector<std::string>& column_names = {});
void write_events_csv(const Trajectory& traj, const std::filesystem::path& path);

}  // namespace passiv
