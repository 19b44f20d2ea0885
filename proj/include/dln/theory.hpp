#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "dln/network.hpp"
#include "dln/problem.hpp"
#include "dln/trainer.hpp"

namespace dln {

/// Cap on the number of entries of P = (d_out r) x (d_out r) for exact materialization.
inline constexpr std::size_t kExactGramThreshold = 4096;

inline bool gram_within_threshold(std::size_t d_out, std::size_t r, std::size_t threshold) {
  const std::size_t n = d_out * r;
  return n * n <= threshold;
}

/// P = 1/(m^(L-1) d_out) * sum_i (W_{i-1:1}X)^T (W_{i-1:1}X) kron W_{L:i+1} W_{L:i+1}^T.
/// Throws TooLarge when P would exceed `exact_threshold` entries; use gram_bounds instead.
Mat gram_matrix_exact(const NetworkState& state, const ProblemInstance& inst,
                      std::size_t exact_threshold = kExactGramThreshold);
Mat gram_matrix_exact(const NetworkState& state, const PartialProducts& products,
                      std::size_t exact_threshold = kExactGramThreshold);

struct GramBounds {
  double lambda_max_ub = 0.0;
  double lambda_min_lb = 0.0;
  std::optional<std::vector<double>> exact_spectrum;  ///< descending
};

/// Eigenvalue bounds from extreme singular values of the partial products:
///   ub = s^2 sum_i sigma_max^2(W_{i-1:1}X) sigma_max^2(W_{L:i+1}),
///   lb = s^2 sum_i sigma_min^2(W_{i-1:1}X) sigma_min^2(W_{L:i+1}).
/// The exact spectrum is attached when P fits under `exact_threshold` (pass 0 to skip).
GramBounds gram_bounds(const NetworkState& state, const ProblemInstance& inst,
                       std::size_t exact_threshold = kExactGramThreshold);
GramBounds gram_bounds(const NetworkState& state, const PartialProducts& products,
                       std::size_t exact_threshold = kExactGramThreshold);

/// Worst normalized singular values of the partial products.
///
/// left_*:  sigma(W_{L:i}) / m^((L-i+1)/2),               1 <  i <= L
/// right_*: sigma(W_{i:1} X) / (m^(i/2) sigma_{max,min}(X)), 1 <= i <  L
/// middle:  ||W_{j:i}|| / (sqrt(L) m^((j-i+1)/2)),          1 <  i <= j < L
/// Empty index sets leave the neutral values (0 for maxima, +inf for minima).
struct ProductMargins {
  double left_upper = 0.0;
  double left_lower = std::numeric_limits<double>::infinity();
  double right_upper = 0.0;
  double right_lower = std::numeric_limits<double>::infinity();
  double middle = 0.0;
  bool middle_vacuous = true;
};

ProductMargins product_margins(const NetworkState& state, const ProblemInstance& inst);

struct ProductCheck {
  ProductMargins margins;
  double upper = 0.0;
  double lower = 0.0;
  double c_mid = 0.0;
  bool two_sided_ok = false;  ///< all left/right bounds hold
  bool middle_ok = false;

  bool ok() const { return two_sided_ok && middle_ok; }
};

ProductCheck check_products(const NetworkState& state, const ProblemInstance& inst, double upper,
                            double lower, double c_mid);

inline constexpr double kInitUpper = 1.2;
inline constexpr double kInitLower = 0.8;
inline constexpr double kTrajUpper = 5.0 / 4.0;
inline constexpr double kTrajLower = 3.0 / 4.0;
inline constexpr double kDefaultMiddleConstant = 3.0;

/// Initialization bounds with constants 1.2 / 0.8 and c_mid sqrt(L) for middle products.
ProductCheck check_init_properties(const NetworkState& state0, const ProblemInstance& inst,
                                   double c_mid = kDefaultMiddleConstant);

enum class BudgetMode { Measured, Formula };

struct PropertyBudgets {
  double c_mid = kDefaultMiddleConstant;
  BudgetMode mode = BudgetMode::Measured;  ///< which B sets the drift radius
};

/// 24 sqrt(B d_out) sigma_max(X) / (L sigma_min^2(X)).
double drift_radius(const ProblemInstance& inst, std::size_t L, double b);

struct PropertyReport {
  bool a_ok = false;
  bool b_ok = false;
  bool c_ok = false;
  double a_ratio = 0.0;  ///< loss_t / predicted bound
  ProductCheck b_check;
  double c_max_drift = 0.0;
  double drift_budget_r = 0.0;  ///< radius under the selected mode
  double drift_budget_r_measured = 0.0;
  double drift_budget_r_formula = 0.0;
};

PropertyReport check_properties(const NetworkState& state_t, const NetworkState& state0,
                                double loss_t, std::size_t t, const ConvergenceModel& model,
                                const PropertyBudgets& budgets, const ProblemInstance& inst);

struct ResidualReport {
  double e_norm = 0.0;  ///< ||E(t) X||_F / sqrt(m^(L-1) d_out)
  double budget = 0.0;  ///< eta * lambda_min_lb * ||U(t) - Y||_F / 6
  /// ||vec(U(t+1) - U(t)) + eta P vec(U(t) - Y) - s vec(E X)||; present only when P was
  /// materialized.
  std::optional<double> identity_residual;
  double delta_u_norm = 0.0;  ///< ||U(t+1) - U(t)||_F
};

/// High-order part of the one-step product update, evaluated on X.
///
/// E(t) X collects every term of prod_i (W_i + D_i) X with two or more D factors,
/// D_i = W_i(t+1) - W_i(t). It is accumulated degree by degree, so no cancellation
/// against the leading terms occurs. Throws PreconditionFailed if `state_t1` is not the
/// gradient step from `state_t` with `grads_t` and `eta`.
ResidualReport residual_E(const NetworkState& state_t, const NetworkState& state_t1,
                          const std::vector<Mat>& grads_t, double eta, const ProblemInstance& inst,
                          const GramBounds& gram_t, std::size_t exact_threshold = kExactGramThreshold);

/// C_B max{1, ln(r/delta)/d_out, ||Phi||^2} ||X||_F^2.
double init_loss_bound(const ProblemInstance& inst, double delta, double c_b);

struct Lemma1Result {
  double coverage = 0.0;  ///< fraction of trials with ratio in [0.9, 1.1]
  std::size_t trials = 0;
  std::size_t inside = 0;
  double mean_ratio = 0.0;  ///< mean of ||A_q...A_1 v|| / m^(q/2)
  double min_ratio = 0.0;
  double max_ratio = 0.0;
};

/// Monte-Carlo coverage of ||A_q ... A_1 v|| in [0.9, 1.1] m^(q/2) with A_1 m x d, the rest
/// m x m, v = (1, ..., 1)/sqrt(d). Trial k draws from Prng(seed, k), row-major, A_1 first;
/// matrices are streamed row by row and never stored.
Lemma1Result verify_lemma1(std::size_t m, std::size_t q, std::size_t d, std::size_t trials,
                           std::uint64_t seed, std::size_t workers = 1);

struct Claim1Result {
  double mean_ratio = 0.0;  ///< mean of ||s W_{L:1}(0) x||^2 / ||x||^2
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Sample k initializes from Prng(seed, k).
Claim1Result verify_claim1(const NetworkShape& shape, const Vec& x, std::size_t samples,
                           std::uint64_t seed, std::size_t workers = 1);

struct ProbeOptions {
  PropertyBudgets budgets;
  std::size_t exact_threshold = kExactGramThreshold;
  bool check_identity = false;  ///< also evaluate the dynamics identity per step (exact P)
};

/// Instrument that evaluates Gram bounds and E(t) at every step and the A/B/C properties
/// at every snapshot.
class TheoryProbe : public Instrument {
 public:
  TheoryProbe(const ProblemInstance& inst, ProbeOptions options);

  void begin(const NetworkState& state0, const ConvergenceModel& model) override;
  void on_step(std::size_t t, const NetworkState& before, const NetworkState& after,
               const std::vector<Mat>& grads, double loss_before) override;
  void on_snapshot(const NetworkState& state, TrajectoryRecord& record) override;

  std::size_t steps() const noexcept { return steps_; }
  std::size_t e_violations() const noexcept { return e_violations_; }
  double max_e_ratio() const noexcept { return max_e_ratio_; }
  double max_identity_residual() const noexcept { return max_identity_residual_; }
  /// Steps where eta * lambda_max_ub > 1.
  std::size_t step_size_violations() const noexcept { return step_size_violations_; }
  const std::vector<PropertyReport>& reports() const noexcept { return reports_; }

 private:
  const ProblemInstance& inst_;
  ProbeOptions options_;
  std::optional<NetworkState> state0_;
  ConvergenceModel model_;
  std::optional<std::size_t> last_step_;
  ResidualReport last_residual_;
  std::size_t steps_ = 0;
  std::size_t e_violations_ = 0;
  std::size_t step_size_violations_ = 0;
  double max_e_ratio_ = 0.0;
  double max_identity_residual_ = 0.0;
  std::vector<PropertyReport> reports_;
};

}  // namespace dln
