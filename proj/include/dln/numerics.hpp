#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>

namespace dln {

/// Dense 64-bit real matrix. Storage order is Eigen's (column-major); anything that
/// serializes or fills entries sequentially does so in row-major order.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Seeded Gaussian source.
///
/// The engine is std::mt19937_64 seeded through std::seed_seq with the four 32-bit
/// halves of (seed, stream), so the raw bit stream is fixed by the C++ standard. Normal
/// variates come from Boost.Random's ziggurat sampler; each draw consumes one or more
/// engine outputs. Identical (seed, stream) pairs reproduce identical sequences.
class Prng {
 public:
  explicit Prng(std::uint64_t seed, std::uint64_t stream = 0);

  double normal() { return normal_(engine_); }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
};

/// Matrices whose smaller side exceeds this use the iterative extreme-value path.
inline constexpr std::size_t kDenseSvdLimit = 1024;

/// i.i.d. N(0, 1) entries, drawn from `prng` in row-major order.
Mat gaussian_matrix(Prng& prng, std::size_t rows, std::size_t cols);

Mat matmul(const Mat& a, const Mat& b);

Mat identity(std::size_t n);

struct SingularExtremes {
  double max = 0.0;
  double min = 0.0;
};

/// Largest and smallest of the min(rows, cols) singular values.
///
/// Uses a full bidiagonal SVD when min(rows, cols) <= dense_limit; otherwise runs
/// Lanczos with full reorthogonalization on the Gram operator of the smaller side
/// until both extreme Ritz values settle to 1e-10 relative.
SingularExtremes extreme_singular_values(const Mat& a, std::size_t dense_limit = kDenseSvdLimit);

inline double spectral_norm(const Mat& a) { return extreme_singular_values(a).max; }

/// All singular values, descending.
std::vector<double> singular_values(const Mat& a);

/// Full spectrum of a symmetric matrix, descending. Rejects matrices whose
/// antisymmetric part exceeds 1e-10 of the Frobenius norm.
std::vector<double> sym_eigenvalues(const Mat& s);

Mat kronecker(const Mat& a, const Mat& b);

/// Column-first stacking into an (rows*cols) x 1 matrix.
Mat vectorize(const Mat& a);

/// Moore-Penrose inverse; singular values below max(rows, cols) * eps * sigma_max are
/// treated as zero.
Mat pseudoinverse(const Mat& a);

bool all_finite(const Mat& a);

/// Throws NumericInput naming `what` if any entry is NaN or Inf.
void require_finite(const Mat& a, const char* what);

}  // namespace dln
