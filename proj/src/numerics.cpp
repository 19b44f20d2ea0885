#include "dln/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dln/errors.hpp"

namespace dln {
namespace {

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t stream) {
  return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(stream),
                       static_cast<std::uint32_t>(stream >> 32)};
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  auto seq = make_seed_seq(seed, stream);
  return std::mt19937_64(seq);
}

std::string shape_of(const Mat& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

// Lanczos on the PSD operator x -> G x, where G is the Gram matrix of the smaller side.
// Returns the extreme eigenvalues of G.
std::pair<double, double> lanczos_gram_extremes(const Mat& a) {
  const bool tall = a.rows() >= a.cols();
  const Eigen::Index n = tall ? a.cols() : a.rows();
  const std::function<Vec(const Vec&)> apply = [&a, tall](const Vec& x) -> Vec {
    if (tall) {
      return a.transpose() * (a * x);
    }
    return a * (a.transpose() * x);
  };

  constexpr double kTol = 1e-10;
  Mat basis(n, n);
  std::vector<double> alpha;
  std::vector<double> beta;  // beta[k] couples basis k and k+1

  // Deterministic start vector with no special alignment.
  Vec q(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    q(i) = 1.0 + 0.5 * std::sin(1.0 + 0.7 * static_cast<double>(i));
  }
  q.normalize();

  double prev_max = std::numeric_limits<double>::quiet_NaN();
  double prev_min = std::numeric_limits<double>::quiet_NaN();
  double lam_max = 0.0;
  double lam_min = 0.0;
  Eigen::Index restart_index = 0;

  for (Eigen::Index k = 0; k < n; ++k) {
    basis.col(k) = q;
    Vec w = apply(q);
    const double a_k = q.dot(w);
    alpha.push_back(a_k);
    // Full reorthogonalization, applied twice for stability.
    for (int pass = 0; pass < 2; ++pass) {
      w -= basis.leftCols(k + 1) * (basis.leftCols(k + 1).transpose() * w);
    }
    double b_k = w.norm();

    const Eigen::Index size = k + 1;
    if (size % 4 == 0 || size == n) {
      Vec diag = Eigen::Map<const Vec>(alpha.data(), size);
      Vec sub = size > 1 ? Vec(Eigen::Map<const Vec>(beta.data(), size - 1)) : Vec(0);
      Eigen::SelfAdjointEigenSolver<Mat> tri;
      tri.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
      lam_min = tri.eigenvalues().minCoeff();
      lam_max = tri.eigenvalues().maxCoeff();
      const double scale = std::max(lam_max, std::numeric_limits<double>::min());
      const bool settled = std::abs(lam_max - prev_max) <= kTol * scale &&
                           std::abs(lam_min - prev_min) <= kTol * std::max(std::abs(lam_min), 1e-6 * scale);
      if (settled) {
        break;
      }
      prev_max = lam_max;
      prev_min = lam_min;
    }
    if (k + 1 == n) {
      break;
    }

    if (b_k <= 1e-13 * std::max(std::abs(a_k), 1.0)) {
      // Invariant subspace: continue with a fresh direction orthogonal to the basis.
      Vec fresh = Vec::Zero(n);
      for (Eigen::Index tries = 0; tries < n; ++tries) {
        fresh.setZero();
        fresh((restart_index++) % n) = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
          fresh -= basis.leftCols(k + 1) * (basis.leftCols(k + 1).transpose() * fresh);
        }
        if (fresh.norm() > 1e-8) {
          break;
        }
      }
      w = fresh;
      b_k = 0.0;
      beta.push_back(0.0);
      q = w.normalized();
      continue;
    }
    beta.push_back(b_k);
    q = w / b_k;
  }
  return {lam_max, std::max(lam_min, 0.0)};
}

}  // namespace

Prng::Prng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)), normal_(0.0, 1.0) {}

Mat gaussian_matrix(Prng& prng, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw InvalidDimension("gaussian_matrix: dimensions must be positive, got " +
                           std::to_string(rows) + "x" + std::to_string(cols));
  }
  Mat out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      out(i, j) = prng.normal();
    }
  }
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw InvalidDimension("matmul: " + shape_of(a) + " times " + shape_of(b));
  }
  return a * b;
}

Mat identity(std::size_t n) { return Mat::Identity(n, n); }

bool all_finite(const Mat& a) { return a.allFinite(); }

void require_finite(const Mat& a, const char* what) {
  if (!a.allFinite()) {
    throw NumericInput(std::string(what) + ": non-finite entry");
  }
}

SingularExtremes extreme_singular_values(const Mat& a, std::size_t dense_limit) {
  if (a.size() == 0) {
    throw InvalidDimension("extreme_singular_values: empty matrix");
  }
  require_finite(a, "extreme_singular_values");
  const auto small_side = static_cast<std::size_t>(std::min(a.rows(), a.cols()));
  if (small_side <= dense_limit) {
    Eigen::BDCSVD<Mat> svd(a);
    const Vec& s = svd.singularValues();
    return {s(0), s(s.size() - 1)};
  }
  const auto [lam_max, lam_min] = lanczos_gram_extremes(a);
  return {std::sqrt(lam_max), std::sqrt(lam_min)};
}

std::vector<double> singular_values(const Mat& a) {
  if (a.size() == 0) {
    throw InvalidDimension("singular_values: empty matrix");
  }
  require_finite(a, "singular_values");
  Eigen::BDCSVD<Mat> svd(a);
  const Vec& s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

std::vector<double> sym_eigenvalues(const Mat& s) {
  if (s.rows() != s.cols() || s.size() == 0) {
    throw InvalidDimension("sym_eigenvalues: matrix must be square and nonempty, got " +
                           shape_of(s));
  }
  require_finite(s, "sym_eigenvalues");
  const double asym = (s - s.transpose()).norm();
  if (asym > 1e-10 * s.norm()) {
    throw InvalidInput("sym_eigenvalues: matrix is not symmetric (||S - S^T||_F = " +
                       std::to_string(asym) + ")");
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(s, Eigen::EigenvaluesOnly);
  std::vector<double> out(eig.eigenvalues().data(),
                          eig.eigenvalues().data() + eig.eigenvalues().size());
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

Mat kronecker(const Mat& a, const Mat& b) {
  if (a.size() == 0 || b.size() == 0) {
    throw InvalidDimension("kronecker: empty operand");
  }
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Mat vectorize(const Mat& a) {
  // Eigen's default storage is column-major, so the raw buffer is already vec(A).
  return Eigen::Map<const Mat>(a.data(), a.size(), 1);
}

Mat pseudoinverse(const Mat& a) {
  if (a.size() == 0) {
    throw InvalidDimension("pseudoinverse: empty matrix");
  }
  require_finite(a, "pseudoinverse");
  Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double tol = std::numeric_limits<double>::epsilon() *
                     static_cast<double>(std::max(a.rows(), a.cols())) * (s.size() ? s(0) : 0.0);
  Vec inv = Vec::Zero(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(k) > tol) {
      inv(k) = 1.0 / s(k);
    }
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace dln
