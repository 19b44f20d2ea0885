#pragma once

#include <cstddef>

#include "dln/numerics.hpp"

namespace dln {

/// Raw regression data: inputs `x` (d_in x n) and labels `y` (d_out x n).
struct RawDataset {
  Mat x;
  Mat y;

  std::size_t d_in() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t d_out() const { return static_cast<std::size_t>(y.rows()); }
  std::size_t n() const { return static_cast<std::size_t>(x.cols()); }

  /// Throws InvalidDimension on mismatched sample counts, NumericInput on NaN/Inf.
  void validate() const;
};

/// Whitened, full-column-rank instance with zero optimal loss.
///
/// `xbar` is d_in x r with rank r, `ybar = phi * xbar`. `opt` is the optimal loss of
/// the raw data this instance was reduced from (zero for synthetic instances); the
/// loss on the reduced instance differs from the raw loss by exactly that offset.
struct ProblemInstance {
  Mat xbar;
  Mat ybar;
  Mat phi;
  std::size_t r = 0;
  double kappa = 1.0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  double opt = 0.0;
  double phi_norm = 0.0;

  std::size_t d_in() const { return static_cast<std::size_t>(xbar.rows()); }
  std::size_t d_out() const { return static_cast<std::size_t>(ybar.rows()); }
};

struct RegressionSolution {
  Mat phi;     ///< Y X^+, the minimum-Frobenius-norm minimizer
  double opt;  ///< 1/2 ||phi X - Y||_F^2
};

RegressionSolution solve_regression(const RawDataset& data);

/// Eigenvalues of X X^T below this fraction of the largest count as zero.
inline constexpr double kRankThreshold = 1e-10;

/// Replaces (X, Y) by (V_r Lambda_r^{1/2}, Phi V_r Lambda_r^{1/2}) where X X^T = V Lambda V^T.
/// Throws DegenerateInstance when X has rank zero.
ProblemInstance reduce_instance(const RawDataset& data);

/// Assembles an instance from a full-column-rank `xbar` and minimizer `phi`, computing
/// ybar and all spectral statistics. Throws DegenerateInstance if `xbar` is rank deficient.
ProblemInstance make_instance(Mat xbar, Mat phi, double opt = 0.0);

struct InstanceStats {
  std::size_t r;
  double kappa;
  double sigma_max;
  double sigma_min;
  double phi_norm;
};

InstanceStats instance_stats(const ProblemInstance& inst);

/// Synthetic instance: xbar = Q1 diag(s) Q2^T with s linearly spaced from sqrt(target_kappa)
/// down to 1 and Gaussian-derived orthogonal Q1 (d_in x r), Q2 (r x r); phi is a Gaussian
/// d_out x d_in matrix rescaled to spectral norm `phi_scale`. Draw order: Q1, Q2, phi.
ProblemInstance random_instance(Prng& prng, std::size_t d_in, std::size_t d_out, std::size_t r,
                                double target_kappa, double phi_scale);

}  // namespace dln
