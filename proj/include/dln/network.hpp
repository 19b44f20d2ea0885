#pragma once

#include <cstddef>
#include <vector>

#include "dln/numerics.hpp"
#include "dln/problem.hpp"

namespace dln {

/// Depth L, hidden width m, and the input/output dimensions.
///
/// For L >= 2 the layers are W_1: m x d_in, W_i: m x m (1 < i < L), W_L: d_out x m.
/// L == 1 is a single d_out x d_in map and m is ignored by the layer shapes (it still
/// enters the scale as m^0 = 1).
struct NetworkShape {
  std::size_t L = 1;
  std::size_t m = 1;
  std::size_t d_in = 1;
  std::size_t d_out = 1;

  void validate() const;

  /// Rows and columns of W_i, 1-based.
  std::size_t layer_rows(std::size_t i) const;
  std::size_t layer_cols(std::size_t i) const;

  /// 1 / sqrt(m^(L-1) d_out).
  double scale() const;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// Weights W_1..W_L (stored 0-based) with the output scaling factor.
class NetworkState {
 public:
  NetworkState(NetworkShape shape, std::vector<Mat> weights);

  const NetworkShape& shape() const noexcept { return shape_; }
  std::size_t depth() const noexcept { return shape_.L; }
  double scale() const noexcept { return scale_; }

  /// W_i, 1-based.
  const Mat& weight(std::size_t i) const;
  const std::vector<Mat>& weights() const noexcept { return weights_; }

 private:
  NetworkShape shape_;
  std::vector<Mat> weights_;
  double scale_;
};

/// Every entry i.i.d. N(0, 1), drawn layer 1..L, each layer row-major.
NetworkState init_xavier(const NetworkShape& shape, Prng& prng);

/// W_j W_{j-1} ... W_i (1-based). j == i - 1 yields the identity on the input space of
/// layer i (the output space, d_out, when i == L + 1).
Mat partial_product(const NetworkState& state, std::size_t i, std::size_t j);

/// Products shared by the gradient and the Gram analysis.
///
/// `left[k]` = W_{k:1} X for k = 0..L (left[0] = X); `right[k]` = W_{L:k+1} for
/// k = 0..L (right[L] = I_{d_out}).
struct PartialProducts {
  std::vector<Mat> left;
  std::vector<Mat> right;
};

PartialProducts partial_products(const NetworkState& state, const Mat& x);

/// U = scale * W_{L:1} X.
Mat predict(const NetworkState& state, const Mat& x);

/// 1/2 ||predict(x) - y||_F^2.
double loss(const NetworkState& state, const Mat& x, const Mat& y);
double loss(const NetworkState& state, const ProblemInstance& inst);

/// grad_i = scale * W_{L:i+1}^T (U - Y) (W_{i-1:1} X)^T for i = 1..L (returned 0-based).
std::vector<Mat> gradients(const NetworkState& state, const Mat& x, const Mat& y);
std::vector<Mat> gradients(const NetworkState& state, const ProblemInstance& inst);

/// Same as above, reusing precomputed products of `state` on `x`.
std::vector<Mat> gradients(const NetworkState& state, const PartialProducts& products,
                           const Mat& y);

}  // namespace dln
