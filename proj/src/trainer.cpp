#include "dln/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "dln/errors.hpp"
#include "dln/theory.hpp"

namespace dln {

ConvergenceModel make_convergence_model(const ProblemInstance& inst, std::size_t L, double eta,
                                        double ell0, double delta, double c_b) {
  if (L == 0) {
    throw InvalidInput("convergence model: L must be positive");
  }
  const Mat gram = inst.xbar.transpose() * inst.xbar;
  const auto spectrum = sym_eigenvalues(gram);
  const double lambda_r = spectrum.back();
  const double sigma_min_sq = inst.sigma_min * inst.sigma_min;
  if (std::abs(lambda_r - sigma_min_sq) > 1e-9 * sigma_min_sq) {
    throw InvalidInput("convergence model: lambda_r(X^T X) = " + std::to_string(lambda_r) +
                       " disagrees with sigma_min(X)^2 = " + std::to_string(sigma_min_sq));
  }
  ConvergenceModel model;
  model.eta = eta;
  model.gamma = 0.25 * static_cast<double>(L) * sigma_min_sq / static_cast<double>(inst.d_out());
  model.per_step_ratio = 1.0 - eta * model.gamma;
  model.ell0 = ell0;
  model.b_bound = init_loss_bound(inst, delta, c_b);
  model.lambda_r = lambda_r;
  return model;
}

double predicted_loss_bound(std::size_t t, const ConvergenceModel& model) {
  return std::pow(model.per_step_ratio, static_cast<double>(t)) * model.ell0;
}

double max_learning_rate(const ProblemInstance& inst, std::size_t L) {
  if (L == 0) {
    throw InvalidInput("max_learning_rate: L must be positive");
  }
  if (!(inst.sigma_max > 0.0)) {
    throw DegenerateInstance("max_learning_rate: instance has zero spectrum");
  }
  return static_cast<double>(inst.d_out()) /
         (3.0 * static_cast<double>(L) * inst.sigma_max * inst.sigma_max);
}

std::string_view to_string(WidthTerm term) {
  switch (term) {
    case WidthTerm::Spectral:
      return "spectral";
    case WidthTerm::Confidence:
      return "confidence";
    case WidthTerm::Depth:
      return "depth";
  }
  return "unknown";
}

WidthRequirement width_requirement(std::size_t L, std::size_t r, double kappa, std::size_t d_out,
                                   double phi_norm, double delta, double c) {
  if (L == 0 || r == 0 || d_out == 0 || !(kappa > 0.0) || !(c > 0.0) || !(phi_norm >= 0.0)) {
    throw InvalidInput("required_width: parameters must be positive");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw InvalidInput("required_width: delta must lie in (0, 1)");
  }
  const double rk3 = static_cast<double>(r) * kappa * kappa * kappa;
  WidthRequirement req;
  req.spectral_term = rk3 * static_cast<double>(d_out) * (1.0 + phi_norm * phi_norm);
  req.confidence_term = rk3 * std::log(static_cast<double>(r) / delta);
  req.depth_term = std::log(static_cast<double>(L));
  double top = req.spectral_term;
  if (req.confidence_term > top) {
    top = req.confidence_term;
    req.dominant = WidthTerm::Confidence;
  }
  if (req.depth_term > top) {
    top = req.depth_term;
    req.dominant = WidthTerm::Depth;
  }
  req.width = static_cast<std::size_t>(std::ceil(c * static_cast<double>(L) * top));
  return req;
}

std::size_t required_width(std::size_t L, std::size_t r, double kappa, std::size_t d_out,
                           double phi_norm, double delta, double c) {
  return width_requirement(L, r, kappa, d_out, phi_norm, delta, c).width;
}

NetworkState apply_step(const NetworkState& state, const std::vector<Mat>& grads, double eta,
                        std::size_t iteration) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw InvalidInput("gd_step: learning rate must be finite and nonnegative");
  }
  if (grads.size() != state.depth()) {
    throw InvalidDimension("gd_step: gradient count does not match depth");
  }
  std::vector<Mat> next;
  next.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].allFinite()) {
      throw Divergence(iteration, "non-finite gradient for W_" + std::to_string(i + 1));
    }
    next.push_back(state.weights()[i] - eta * grads[i]);
    if (!next.back().allFinite()) {
      throw Divergence(iteration, "non-finite weight W_" + std::to_string(i + 1));
    }
  }
  return NetworkState(state.shape(), std::move(next));
}

NetworkState gd_step(const NetworkState& state, const Mat& x, const Mat& y, double eta,
                     std::size_t iteration) {
  return apply_step(state, gradients(state, x, y), eta, iteration);
}

NetworkState gd_step(const NetworkState& state, const ProblemInstance& inst, double eta,
                     std::size_t iteration) {
  return gd_step(state, inst.xbar, inst.ybar, eta, iteration);
}

std::string_view to_string(Termination reason) {
  switch (reason) {
    case Termination::Converged:
      return "converged";
    case Termination::MaxIters:
      return "max-iters";
    case Termination::Diverged:
      return "diverged";
  }
  return "unknown";
}

namespace {

TrajectoryRecord base_record(std::size_t t, double loss_t, const NetworkState& state,
                             const NetworkState& state0, const ConvergenceModel& model) {
  TrajectoryRecord rec;
  rec.t = t;
  rec.loss = loss_t;
  rec.predicted_bound = predicted_loss_bound(t, model);
  rec.eta = model.eta;
  rec.drift.reserve(state.depth());
  for (std::size_t i = 0; i < state.depth(); ++i) {
    rec.drift.push_back((state.weights()[i] - state0.weights()[i]).norm());
  }
  rec.max_drift = rec.drift.empty() ? 0.0 : *std::max_element(rec.drift.begin(), rec.drift.end());
  return rec;
}

}  // namespace

Trajectory train(const NetworkState& state0, const ProblemInstance& inst, const TrainConfig& config,
                 Instrument* instrument) {
  const std::size_t L = state0.depth();
  if (state0.shape().d_in != inst.d_in() || state0.shape().d_out != inst.d_out()) {
    throw InvalidDimension("train: network shape does not conform to the instance");
  }
  if (!(config.eta >= 0.0) || !std::isfinite(config.eta)) {
    throw InvalidInput("train: learning rate must be finite and nonnegative");
  }
  const double eta_cap = max_learning_rate(inst, L);
  if (!config.allow_unsafe_eta && config.eta > eta_cap * (1.0 + 1e-12)) {
    throw InvalidInput("train: eta = " + std::to_string(config.eta) +
                       " exceeds the safe rate " + std::to_string(eta_cap) +
                       " (set allow_unsafe_eta to override)");
  }
  const std::size_t stride = std::max<std::size_t>(config.record_stride, 1);

  const double ell0 = loss(state0, inst);
  Trajectory traj{{}, {}, state0, Termination::MaxIters,
                  make_convergence_model(inst, L, config.eta, ell0, config.delta, config.c_b)};
  traj.losses.push_back(ell0);
  if (instrument) {
    instrument->begin(state0, traj.model);
  }

  auto snapshot = [&](std::size_t t, double loss_t, const NetworkState& state) {
    TrajectoryRecord rec = base_record(t, loss_t, state, state0, traj.model);
    if (instrument) {
      instrument->on_snapshot(state, rec);
    }
    traj.records.push_back(std::move(rec));
  };

  NetworkState state = state0;
  double loss_t = ell0;
  for (std::size_t t = 0;; ++t) {
    if (loss_t <= config.stop_loss) {
      traj.termination = Termination::Converged;
      snapshot(t, loss_t, state);
      break;
    }
    if (t >= config.max_iters) {
      traj.termination = Termination::MaxIters;
      snapshot(t, loss_t, state);
      break;
    }

    const PartialProducts products = partial_products(state, inst.xbar);
    const std::vector<Mat> grads = gradients(state, products, inst.ybar);
    std::optional<NetworkState> next;
    double loss_next = 0.0;
    try {
      next.emplace(apply_step(state, grads, config.eta, t));
      loss_next = loss(*next, inst);
      if (!std::isfinite(loss_next) || loss_next > kDivergenceFactor * ell0) {
        throw Divergence(t, "loss " + std::to_string(loss_next) + " exceeds divergence threshold");
      }
    } catch (const Divergence&) {
      traj.termination = Termination::Diverged;
      snapshot(t, loss_t, state);
      break;
    }

    if (instrument) {
      instrument->on_step(t, state, *next, grads, loss_t);
    }
    if (t % stride == 0) {
      snapshot(t, loss_t, state);
    }
    state = std::move(*next);
    loss_t = loss_next;
    traj.losses.push_back(loss_t);
  }
  traj.final_state = std::move(state);
  return traj;
}

}  // namespace dln
