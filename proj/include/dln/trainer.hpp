#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "dln/network.hpp"
#include "dln/problem.hpp"

namespace dln {

struct TrainConfig {
  double eta = 0.0;
  std::size_t max_iters = 0;
  double stop_loss = 0.0;  ///< absolute; the reduced instance has optimum 0
  std::size_t record_stride = 1;
  bool allow_unsafe_eta = false;  ///< permit eta above max_learning_rate
  double delta = 0.1;             ///< failure probability fed to the initial-loss bound
  double c_b = 3.0;               ///< constant of the initial-loss bound
};

/// Linear-rate model: loss(t) <= (1 - eta * gamma)^t * ell0 with gamma = L sigma_min^2 / (4 d_out).
struct ConvergenceModel {
  double eta = 0.0;
  double gamma = 0.0;
  double per_step_ratio = 1.0;
  double ell0 = 0.0;
  double b_bound = 0.0;  ///< formula bound on ell0 (see init_loss_bound)
  double lambda_r = 0.0; ///< smallest nonzero eigenvalue of X^T X, equal to sigma_min^2
};

/// Builds the model and checks that lambda_r(X^T X) and sigma_min(X)^2 agree to 1e-9.
ConvergenceModel make_convergence_model(const ProblemInstance& inst, std::size_t L, double eta,
                                        double ell0, double delta = 0.1, double c_b = 3.0);

/// (1 - eta * gamma)^t * ell0.
double predicted_loss_bound(std::size_t t, const ConvergenceModel& model);

/// d_out / (3 L sigma_max^2).
double max_learning_rate(const ProblemInstance& inst, std::size_t L);

enum class WidthTerm { Spectral, Confidence, Depth };

std::string_view to_string(WidthTerm term);

struct WidthRequirement {
  std::size_t width = 0;
  WidthTerm dominant = WidthTerm::Spectral;
  double spectral_term = 0.0;    ///< r kappa^3 d_out (1 + ||Phi||^2)
  double confidence_term = 0.0;  ///< r kappa^3 ln(r / delta)
  double depth_term = 0.0;       ///< ln L
};

/// ceil(C L max{r kappa^3 d_out (1 + phi_norm^2), r kappa^3 ln(r/delta), ln L}).
WidthRequirement width_requirement(std::size_t L, std::size_t r, double kappa, std::size_t d_out,
                                   double phi_norm, double delta, double c);

std::size_t required_width(std::size_t L, std::size_t r, double kappa, std::size_t d_out,
                           double phi_norm, double delta, double c);

/// Simultaneous update W_i <- W_i - eta * grad_i. Throws Divergence (tagged with
/// `iteration`) if any gradient or updated weight is non-finite.
NetworkState gd_step(const NetworkState& state, const Mat& x, const Mat& y, double eta,
                     std::size_t iteration = 0);
NetworkState gd_step(const NetworkState& state, const ProblemInstance& inst, double eta,
                     std::size_t iteration = 0);

/// Applies precomputed gradients.
NetworkState apply_step(const NetworkState& state, const std::vector<Mat>& grads, double eta,
                        std::size_t iteration = 0);

enum class Termination { Converged, MaxIters, Diverged };

std::string_view to_string(Termination reason);

/// One snapshot row. Fields after `eta` are filled by an Instrument; without one they
/// stay NaN / false.
struct TrajectoryRecord {
  std::size_t t = 0;
  double loss = 0.0;
  double predicted_bound = 0.0;
  double eta = 0.0;
  double max_drift = 0.0;
  std::vector<double> drift;  ///< ||W_i(t) - W_i(0)||_F per layer

  bool instrumented = false;
  double lambda_min_lb = std::numeric_limits<double>::quiet_NaN();
  double lambda_max_ub = std::numeric_limits<double>::quiet_NaN();
  bool a_ok = false;
  bool b_ok = false;
  bool c_ok = false;
  double drift_budget_r = std::numeric_limits<double>::quiet_NaN();
  double e_norm = std::numeric_limits<double>::quiet_NaN();  ///< for the step t -> t+1
  double e_budget = std::numeric_limits<double>::quiet_NaN();
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;  ///< strictly increasing t
  std::vector<double> losses;             ///< loss(t) for every t reached
  NetworkState final_state;
  Termination termination = Termination::MaxIters;
  ConvergenceModel model;
};

/// Hooks for per-step and per-snapshot measurements.
class Instrument {
 public:
  virtual ~Instrument() = default;

  virtual void begin(const NetworkState& /*state0*/, const ConvergenceModel& /*model*/) {}

  /// Step t -> t+1, called before the snapshot of t (if any).
  virtual void on_step(std::size_t /*t*/, const NetworkState& /*before*/,
                       const NetworkState& /*after*/, const std::vector<Mat>& /*grads*/,
                       double /*loss_before*/) {}

  virtual void on_snapshot(const NetworkState& /*state*/, TrajectoryRecord& /*record*/) {}
};

/// Loss above this multiple of ell0 counts as divergence.
inline constexpr double kDivergenceFactor = 1e12;

/// Gradient descent from `state0` until loss <= stop_loss, max_iters steps, or divergence.
/// Snapshots are taken at t = 0, every record_stride-th t, and the final t.
/// Throws InvalidInput if eta exceeds max_learning_rate without allow_unsafe_eta.
Trajectory train(const NetworkState& state0, const ProblemInstance& inst, const TrainConfig& config,
                 Instrument* instrument = nullptr);

}  // namespace dln
