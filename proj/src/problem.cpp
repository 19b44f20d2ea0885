#include "dln/problem.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "dln/errors.hpp"

namespace dln {
namespace {

Mat orthonormal_columns(Prng& prng, std::size_t rows, std::size_t cols) {
  const Mat g = gaussian_matrix(prng, rows, cols);
  Eigen::HouseholderQR<Mat> qr(g);
  return qr.householderQ() * Mat::Identity(static_cast<Eigen::Index>(rows),
                                           static_cast<Eigen::Index>(cols));
}

}  // namespace

void RawDataset::validate() const {
  if (x.cols() == 0 || x.rows() == 0 || y.rows() == 0) {
    throw InvalidDimension("dataset: X and Y must be nonempty");
  }
  if (x.cols() != y.cols()) {
    throw InvalidDimension("dataset: X has " + std::to_string(x.cols()) + " samples but Y has " +
                           std::to_string(y.cols()));
  }
  require_finite(x, "dataset X");
  require_finite(y, "dataset Y");
}

RegressionSolution solve_regression(const RawDataset& data) {
  data.validate();
  Mat phi = data.y * pseudoinverse(data.x);
  const double opt = 0.5 * (phi * data.x - data.y).squaredNorm();
  return {std::move(phi), opt};
}

ProblemInstance make_instance(Mat xbar, Mat phi, double opt) {
  if (xbar.size() == 0) {
    throw DegenerateInstance("instance: empty xbar");
  }
  if (phi.cols() != xbar.rows()) {
    throw InvalidDimension("instance: phi has " + std::to_string(phi.cols()) +
                           " columns but xbar has " + std::to_string(xbar.rows()) + " rows");
  }
  if (xbar.cols() > xbar.rows()) {
    throw DegenerateInstance("instance: xbar has more columns than rows, cannot have full column rank");
  }
  require_finite(xbar, "instance xbar");
  require_finite(phi, "instance phi");

  const auto sx = extreme_singular_values(xbar);
  if (!(sx.min > 0.0) || sx.min * sx.min <= kRankThreshold * sx.max * sx.max) {
    throw DegenerateInstance("instance: xbar is not full column rank (sigma_min = " +
                             std::to_string(sx.min) + ")");
  }

  ProblemInstance inst;
  inst.ybar = phi * xbar;
  inst.r = static_cast<std::size_t>(xbar.cols());
  inst.sigma_max = sx.max;
  inst.sigma_min = sx.min;
  inst.kappa = (sx.max / sx.min) * (sx.max / sx.min);
  inst.opt = opt;
  inst.phi_norm = phi.size() ? spectral_norm(phi) : 0.0;
  inst.xbar = std::move(xbar);
  inst.phi = std::move(phi);
  return inst;
}

ProblemInstance reduce_instance(const RawDataset& data) {
  auto [phi, opt] = solve_regression(data);

  const Mat gram = data.x * data.x.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
  const Vec& lam = eig.eigenvalues();  // ascending
  const double lam_max = lam.size() ? lam(lam.size() - 1) : 0.0;
  if (!(lam_max > 0.0)) {
    throw DegenerateInstance("reduce_instance: X is identically zero (rank 0)");
  }
  std::vector<Eigen::Index> kept;
  for (Eigen::Index k = lam.size() - 1; k >= 0; --k) {
    if (lam(k) > kRankThreshold * lam_max) {
      kept.push_back(k);
    }
  }
  Mat xbar(gram.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c) {
    xbar.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(kept[c]) * std::sqrt(lam(kept[c]));
  }
  return make_instance(std::move(xbar), std::move(phi), opt);
}

InstanceStats instance_stats(const ProblemInstance& inst) {
  return {inst.r, inst.kappa, inst.sigma_max, inst.sigma_min, inst.phi_norm};
}

ProblemInstance random_instance(Prng& prng, std::size_t d_in, std::size_t d_out, std::size_t r,
                                double target_kappa, double phi_scale) {
  if (r == 0 || d_out == 0 || r > d_in) {
    throw InvalidDimension("random_instance: need 1 <= r <= d_in and d_out >= 1 (d_in=" +
                           std::to_string(d_in) + ", r=" + std::to_string(r) + ")");
  }
  if (!(target_kappa >= 1.0) || !std::isfinite(target_kappa)) {
    throw InvalidInput("random_instance: target_kappa must be finite and >= 1");
  }
  if (r == 1 && target_kappa != 1.0) {
    throw InvalidInput("random_instance: a rank-1 instance always has kappa = 1");
  }
  if (!(phi_scale >= 0.0) || !std::isfinite(phi_scale)) {
    throw InvalidInput("random_instance: phi_scale must be finite and nonnegative");
  }

  const Mat q1 = orthonormal_columns(prng, d_in, r);
  const Mat q2 = orthonormal_columns(prng, r, r);
  const Mat g = gaussian_matrix(prng, d_out, d_in);

  const double top = std::sqrt(target_kappa);
  Vec s(static_cast<Eigen::Index>(r));
  for (std::size_t k = 0; k < r; ++k) {
    const double frac = r > 1 ? static_cast<double>(k) / static_cast<double>(r - 1) : 0.0;
    s(static_cast<Eigen::Index>(k)) = top + (1.0 - top) * frac;
  }
  Mat xbar = q1 * s.asDiagonal() * q2.transpose();

  Mat phi = Mat::Zero(g.rows(), g.cols());
  if (phi_scale > 0.0) {
    phi = g * (phi_scale / spectral_norm(g));
  }
  return make_instance(std::move(xbar), std::move(phi), 0.0);
}

}  // namespace dln
