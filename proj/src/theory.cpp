#include "dln/theory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dln/errors.hpp"
#include "dln/parallel.hpp"

namespace dln {
namespace {

// Extreme eigenvalues of A^T A (the "column" Gram). When A has fewer rows than columns the
// Gram is singular and its smallest eigenvalue is zero.
struct GramExtremes {
  double max_sq = 0.0;
  double min_sq = 0.0;
};

GramExtremes column_gram_extremes(const Mat& a) {
  const auto sv = extreme_singular_values(a);
  return {sv.max * sv.max, a.rows() >= a.cols() ? sv.min * sv.min : 0.0};
}

// Extreme eigenvalues of A A^T.
GramExtremes row_gram_extremes(const Mat& a) {
  const auto sv = extreme_singular_values(a);
  return {sv.max * sv.max, a.cols() >= a.rows() ? sv.min * sv.min : 0.0};
}

double width_power(std::size_t m, double exponent) {
  return std::pow(static_cast<double>(m), exponent);
}

}  // namespace

Mat gram_matrix_exact(const NetworkState& state, const PartialProducts& products,
                      std::size_t exact_threshold) {
  const std::size_t L = state.depth();
  const std::size_t d_out = state.shape().d_out;
  const auto r = static_cast<std::size_t>(products.left[0].cols());
  if (!gram_within_threshold(d_out, r, exact_threshold)) {
    throw TooLarge("gram_matrix_exact: P would be " + std::to_string(d_out * r) + "x" +
                   std::to_string(d_out * r) + ", above the exact threshold of " +
                   std::to_string(exact_threshold) + " entries; use gram_bounds");
  }
  const double s2 = state.scale() * state.scale();
  const auto n = static_cast<Eigen::Index>(d_out * r);
  Mat p = Mat::Zero(n, n);
  for (std::size_t i = 1; i <= L; ++i) {
    const Mat left_gram = products.left[i - 1].transpose() * products.left[i - 1];
    const Mat right_gram = products.right[i] * products.right[i].transpose();
    p += kronecker(left_gram, right_gram);
  }
  p *= s2;
  // Symmetrize away rounding asymmetry from the accumulated products.
  return 0.5 * (p + p.transpose());
}

Mat gram_matrix_exact(const NetworkState& state, const ProblemInstance& inst,
                      std::size_t exact_threshold) {
  return gram_matrix_exact(state, partial_products(state, inst.xbar), exact_threshold);
}

GramBounds gram_bounds(const NetworkState& state, const PartialProducts& products,
                       std::size_t exact_threshold) {
  const std::size_t L = state.depth();
  const double s2 = state.scale() * state.scale();
  GramBounds out;
  for (std::size_t i = 1; i <= L; ++i) {
    const GramExtremes left = column_gram_extremes(products.left[i - 1]);
    const GramExtremes right = row_gram_extremes(products.right[i]);
    out.lambda_max_ub += left.max_sq * right.max_sq;
    out.lambda_min_lb += left.min_sq * right.min_sq;
  }
  out.lambda_max_ub *= s2;
  out.lambda_min_lb *= s2;

  const std::size_t d_out = state.shape().d_out;
  const auto r = static_cast<std::size_t>(products.left[0].cols());
  if (exact_threshold > 0 && gram_within_threshold(d_out, r, exact_threshold)) {
    out.exact_spectrum = sym_eigenvalues(gram_matrix_exact(state, products, exact_threshold));
  }
  return out;
}

GramBounds gram_bounds(const NetworkState& state, const ProblemInstance& inst,
                       std::size_t exact_threshold) {
  return gram_bounds(state, partial_products(state, inst.xbar), exact_threshold);
}

ProductMargins product_margins(const NetworkState& state, const ProblemInstance& inst) {
  const std::size_t L = state.depth();
  const std::size_t m = state.shape().m;
  const PartialProducts products = partial_products(state, inst.xbar);
  ProductMargins out;

  for (std::size_t i = 2; i <= L; ++i) {
    // W_{L:i} = right[i-1]; its smallest singular value is taken over the d_out side.
    const GramExtremes g = row_gram_extremes(products.right[i - 1]);
    const double norm = width_power(m, static_cast<double>(L - i + 1) / 2.0);
    out.left_upper = std::max(out.left_upper, std::sqrt(g.max_sq) / norm);
    out.left_lower = std::min(out.left_lower, std::sqrt(g.min_sq) / norm);
  }
  for (std::size_t i = 1; i < L; ++i) {
    const GramExtremes g = column_gram_extremes(products.left[i]);
    const double norm = width_power(m, static_cast<double>(i) / 2.0);
    out.right_upper = std::max(out.right_upper, std::sqrt(g.max_sq) / (norm * inst.sigma_max));
    out.right_lower = std::min(out.right_lower, std::sqrt(g.min_sq) / (norm * inst.sigma_min));
  }
  const double sqrt_l = std::sqrt(static_cast<double>(L));
  for (std::size_t i = 2; i < L; ++i) {
    Mat prod = state.weight(i);
    for (std::size_t j = i; j < L; ++j) {
      if (j > i) {
        prod = state.weight(j) * prod;
      }
      const double norm = sqrt_l * width_power(m, static_cast<double>(j - i + 1) / 2.0);
      out.middle = std::max(out.middle, spectral_norm(prod) / norm);
      out.middle_vacuous = false;
    }
  }
  return out;
}

ProductCheck check_products(const NetworkState& state, const ProblemInstance& inst, double upper,
                            double lower, double c_mid) {
  ProductCheck check;
  check.margins = product_margins(state, inst);
  check.upper = upper;
  check.lower = lower;
  check.c_mid = c_mid;
  const ProductMargins& g = check.margins;
  check.two_sided_ok = g.left_upper <= upper && g.left_lower >= lower && g.right_upper <= upper &&
                       g.right_lower >= lower;
  check.middle_ok = g.middle_vacuous || g.middle <= c_mid;
  return check;
}

ProductCheck check_init_properties(const NetworkState& state0, const ProblemInstance& inst,
                                   double c_mid) {
  return check_products(state0, inst, kInitUpper, kInitLower, c_mid);
}

double drift_radius(const ProblemInstance& inst, std::size_t L, double b) {
  return 24.0 * std::sqrt(b * static_cast<double>(inst.d_out())) * inst.sigma_max /
         (static_cast<double>(L) * inst.sigma_min * inst.sigma_min);
}

PropertyReport check_properties(const NetworkState& state_t, const NetworkState& state0,
                                double loss_t, std::size_t t, const ConvergenceModel& model,
                                const PropertyBudgets& budgets, const ProblemInstance& inst) {
  if (!(state_t.shape() == state0.shape())) {
    throw PreconditionFailed("check_properties: state and initialization differ in shape");
  }
  const std::size_t L = state_t.depth();
  PropertyReport rep;

  const double bound = predicted_loss_bound(t, model);
  rep.a_ratio = bound > 0.0 ? loss_t / bound : (loss_t > 0.0 ? INFINITY : 0.0);
  rep.a_ok = loss_t <= bound * (1.0 + 1e-12);

  rep.b_check = check_products(state_t, inst, kTrajUpper, kTrajLower, budgets.c_mid);
  rep.b_ok = rep.b_check.ok();

  for (std::size_t i = 1; i <= L; ++i) {
    rep.c_max_drift = std::max(rep.c_max_drift, (state_t.weight(i) - state0.weight(i)).norm());
  }
  rep.drift_budget_r_measured = drift_radius(inst, L, model.ell0);
  rep.drift_budget_r_formula = drift_radius(inst, L, model.b_bound);
  rep.drift_budget_r = budgets.mode == BudgetMode::Measured ? rep.drift_budget_r_measured
                                                            : rep.drift_budget_r_formula;
  rep.c_ok = rep.c_max_drift <= rep.drift_budget_r;
  return rep;
}

ResidualReport residual_E(const NetworkState& state_t, const NetworkState& state_t1,
                          const std::vector<Mat>& grads_t, double eta, const ProblemInstance& inst,
                          const GramBounds& gram_t, std::size_t exact_threshold) {
  if (!(state_t.shape() == state_t1.shape()) || grads_t.size() != state_t.depth()) {
    throw PreconditionFailed("residual_E: states or gradients do not share a shape");
  }
  const std::size_t L = state_t.depth();
  std::vector<Mat> deltas;
  deltas.reserve(L);
  for (std::size_t i = 1; i <= L; ++i) {
    const Mat& w = state_t.weight(i);
    const Mat& g = grads_t[i - 1];
    if (g.rows() != w.rows() || g.cols() != w.cols()) {
      throw PreconditionFailed("residual_E: gradient shape mismatch at layer " + std::to_string(i));
    }
    Mat d = state_t1.weight(i) - w;
    const double mismatch = (d + eta * g).norm();
    if (mismatch > 1e-10 * (w.norm() + eta * g.norm()) + 1e-300) {
      throw PreconditionFailed("residual_E: state_t1 is not the gradient step from state_t (layer " +
                               std::to_string(i) + ")");
    }
    deltas.push_back(std::move(d));
  }

  // Degree-split evaluation of prod_k (W_k + D_k) X: order0 has no D factor, order1 exactly
  // one, higher two or more.
  Mat order0 = inst.xbar;
  Mat order1 = Mat::Zero(inst.xbar.rows(), inst.xbar.cols());
  Mat higher = order1;
  for (std::size_t k = 1; k <= L; ++k) {
    const Mat& w = state_t.weight(k);
    const Mat& d = deltas[k - 1];
    Mat next_higher = w * higher + d * higher + d * order1;
    Mat next_order1 = w * order1 + d * order0;
    order0 = w * order0;
    higher = std::move(next_higher);
    order1 = std::move(next_order1);
  }

  const double s = state_t.scale();
  ResidualReport rep;
  rep.e_norm = s * higher.norm();
  const Mat u_t = s * order0;
  const Mat residual = u_t - inst.ybar;
  rep.budget = eta * gram_t.lambda_min_lb * residual.norm() / 6.0;
  const Mat delta_u = predict(state_t1, inst.xbar) - u_t;
  rep.delta_u_norm = delta_u.norm();

  if (exact_threshold > 0 && gram_within_threshold(inst.d_out(), inst.r, exact_threshold)) {
    const Mat p = gram_matrix_exact(state_t, inst, exact_threshold);
    const Mat lhs = vectorize(delta_u) + eta * p * vectorize(residual) - s * vectorize(higher);
    rep.identity_residual = lhs.norm();
  }
  return rep;
}

double init_loss_bound(const ProblemInstance& inst, double delta, double c_b) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw InvalidInput("init_loss_bound: delta must lie in (0, 1)");
  }
  const double confidence =
      std::log(static_cast<double>(inst.r) / delta) / static_cast<double>(inst.d_out());
  const double factor = std::max({1.0, confidence, inst.phi_norm * inst.phi_norm});
  return c_b * factor * inst.xbar.squaredNorm();
}

Lemma1Result verify_lemma1(std::size_t m, std::size_t q, std::size_t d, std::size_t trials,
                           std::uint64_t seed, std::size_t workers) {
  if (q < 1 || m <= q || d < 1 || trials < 1) {
    throw InvalidInput("verify_lemma1: need m > q >= 1, d >= 1, trials >= 1");
  }
  const double half_log_m = 0.5 * std::log(static_cast<double>(m));
  std::vector<double> ratios(trials);
  parallel_for(trials, workers, [&](std::size_t k) {
    Prng prng(seed, k);
    Vec x = Vec::Constant(static_cast<Eigen::Index>(d), 1.0 / std::sqrt(static_cast<double>(d)));
    Vec y(static_cast<Eigen::Index>(m));
    double log_ratio = 0.0;
    for (std::size_t layer = 0; layer < q; ++layer) {
      const Eigen::Index cols = x.size();
      for (Eigen::Index row = 0; row < y.size(); ++row) {
        double acc = 0.0;
        for (Eigen::Index c = 0; c < cols; ++c) {
          acc += prng.normal() * x(c);
        }
        y(row) = acc;
      }
      // Renormalizing keeps the running vector O(1); the product of the per-layer
      // growth factors equals ||A_q...A_1 v||.
      const double nrm = y.norm();
      log_ratio += std::log(nrm) - half_log_m;
      x = y / nrm;
    }
    ratios[k] = std::exp(log_ratio);
  });

  Lemma1Result out;
  out.trials = trials;
  out.min_ratio = ratios.front();
  out.max_ratio = ratios.front();
  double sum = 0.0;
  for (double ratio : ratios) {
    sum += ratio;
    out.min_ratio = std::min(out.min_ratio, ratio);
    out.max_ratio = std::max(out.max_ratio, ratio);
    if (ratio >= 0.9 && ratio <= 1.1) {
      ++out.inside;
    }
  }
  out.mean_ratio = sum / static_cast<double>(trials);
  out.coverage = static_cast<double>(out.inside) / static_cast<double>(trials);
  return out;
}

Claim1Result verify_claim1(const NetworkShape& shape, const Vec& x, std::size_t samples,
                           std::uint64_t seed, std::size_t workers) {
  shape.validate();
  if (static_cast<std::size_t>(x.size()) != shape.d_in) {
    throw InvalidDimension("verify_claim1: x must have d_in entries");
  }
  const double x_sq = x.squaredNorm();
  if (!(x_sq > 0.0)) {
    throw InvalidInput("verify_claim1: x must be nonzero");
  }
  if (samples == 0) {
    throw InvalidInput("verify_claim1: need at least one sample");
  }
  const double s2 = shape.scale() * shape.scale();
  std::vector<double> ratios(samples);
  parallel_for(samples, workers, [&](std::size_t k) {
    Prng prng(seed, k);
    const NetworkState state = init_xavier(shape, prng);
    Vec y = x;
    for (const Mat& w : state.weights()) {
      y = w * y;
    }
    ratios[k] = s2 * y.squaredNorm() / x_sq;
  });
  Claim1Result out;
  out.samples = samples;
  double sum = 0.0;
  for (double v : ratios) {
    sum += v;
  }
  out.mean_ratio = sum / static_cast<double>(samples);
  double var = 0.0;
  for (double v : ratios) {
    var += (v - out.mean_ratio) * (v - out.mean_ratio);
  }
  if (samples > 1) {
    var /= static_cast<double>(samples - 1);
  }
  out.std_error = std::sqrt(var / static_cast<double>(samples));
  return out;
}

TheoryProbe::TheoryProbe(const ProblemInstance& inst, ProbeOptions options)
    : inst_(inst), options_(options) {}

void TheoryProbe::begin(const NetworkState& state0, const ConvergenceModel& model) {
  state0_.emplace(state0);
  model_ = model;
  last_step_.reset();
  steps_ = 0;
  e_violations_ = 0;
  step_size_violations_ = 0;
  max_e_ratio_ = 0.0;
  max_identity_residual_ = 0.0;
  reports_.clear();
}

void TheoryProbe::on_step(std::size_t t, const NetworkState& before, const NetworkState& after,
                          const std::vector<Mat>& grads, double /*loss_before*/) {
  const std::size_t identity_threshold = options_.check_identity ? options_.exact_threshold : 0;
  const GramBounds gb = gram_bounds(before, inst_, 0);
  last_residual_ = residual_E(before, after, grads, model_.eta, inst_, gb, identity_threshold);
  last_step_ = t;
  ++steps_;

  const ResidualReport& res = last_residual_;
  double ratio = 0.0;
  if (res.budget > 0.0) {
    ratio = res.e_norm / res.budget;
  } else if (res.e_norm > 0.0) {
    ratio = INFINITY;
  }
  max_e_ratio_ = std::max(max_e_ratio_, ratio);
  if (res.e_norm > res.budget) {
    ++e_violations_;
  }
  if (model_.eta * gb.lambda_max_ub > 1.0) {
    ++step_size_violations_;
  }
  if (res.identity_residual) {
    max_identity_residual_ = std::max(max_identity_residual_, *res.identity_residual);
  }
}

void TheoryProbe::on_snapshot(const NetworkState& state, TrajectoryRecord& record) {
  if (!state0_) {
    throw PreconditionFailed("TheoryProbe: snapshot before begin()");
  }
  const GramBounds gb = gram_bounds(state, inst_, 0);
  const PropertyReport rep =
      check_properties(state, *state0_, record.loss, record.t, model_, options_.budgets, inst_);
  record.instrumented = true;
  record.lambda_min_lb = gb.lambda_min_lb;
  record.lambda_max_ub = gb.lambda_max_ub;
  record.a_ok = rep.a_ok;
  record.b_ok = rep.b_ok;
  record.c_ok = rep.c_ok;
  record.drift_budget_r = rep.drift_budget_r;
  if (last_step_ && *last_step_ == record.t) {
    record.e_norm = last_residual_.e_norm;
    record.e_budget = last_residual_.budget;
  }
  reports_.push_back(rep);
}

}  // namespace dln
