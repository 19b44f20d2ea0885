#include "dln/network.hpp"

#include <cmath>
#include <string>

#include "dln/errors.hpp"

namespace dln {

void NetworkShape::validate() const {
  if (L == 0 || d_in == 0 || d_out == 0) {
    throw InvalidDimension("network shape: L, d_in and d_out must be positive");
  }
  if (L >= 2 && m == 0) {
    throw InvalidDimension("network shape: hidden width m must be positive for L >= 2");
  }
}

std::size_t NetworkShape::layer_rows(std::size_t i) const {
  if (i == 0 || i > L) {
    throw InvalidIndex("layer index " + std::to_string(i) + " outside 1.." + std::to_string(L));
  }
  return i == L ? d_out : m;
}

std::size_t NetworkShape::layer_cols(std::size_t i) const {
  if (i == 0 || i > L) {
    throw InvalidIndex("layer index " + std::to_string(i) + " outside 1.." + std::to_string(L));
  }
  return i == 1 ? d_in : m;
}

double NetworkShape::scale() const {
  double denom = static_cast<double>(d_out);
  for (std::size_t k = 1; k < L; ++k) {
    denom *= static_cast<double>(m);
  }
  return 1.0 / std::sqrt(denom);
}

NetworkState::NetworkState(NetworkShape shape, std::vector<Mat> weights)
    : shape_(shape), weights_(std::move(weights)), scale_(shape.scale()) {
  shape_.validate();
  if (weights_.size() != shape_.L) {
    throw InvalidDimension("network state: expected " + std::to_string(shape_.L) +
                           " weight matrices, got " + std::to_string(weights_.size()));
  }
  for (std::size_t i = 1; i <= shape_.L; ++i) {
    const Mat& w = weights_[i - 1];
    if (static_cast<std::size_t>(w.rows()) != shape_.layer_rows(i) ||
        static_cast<std::size_t>(w.cols()) != shape_.layer_cols(i)) {
      throw InvalidDimension("network state: W_" + std::to_string(i) + " is " +
                             std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                             ", expected " + std::to_string(shape_.layer_rows(i)) + "x" +
                             std::to_string(shape_.layer_cols(i)));
    }
  }
}

const Mat& NetworkState::weight(std::size_t i) const {
  if (i == 0 || i > shape_.L) {
    throw InvalidIndex("weight index " + std::to_string(i) + " outside 1.." +
                       std::to_string(shape_.L));
  }
  return weights_[i - 1];
}

NetworkState init_xavier(const NetworkShape& shape, Prng& prng) {
  shape.validate();
  std::vector<Mat> weights;
  weights.reserve(shape.L);
  for (std::size_t i = 1; i <= shape.L; ++i) {
    weights.push_back(gaussian_matrix(prng, shape.layer_rows(i), shape.layer_cols(i)));
  }
  return NetworkState(shape, std::move(weights));
}

Mat partial_product(const NetworkState& state, std::size_t i, std::size_t j) {
  const std::size_t L = state.depth();
  if (i < 1 || i > L + 1 || j > L || j + 1 < i) {
    throw InvalidIndex("partial_product: need 1 <= i <= L+1, 0 <= j <= L, j >= i-1 (i=" +
                       std::to_string(i) + ", j=" + std::to_string(j) + ", L=" +
                       std::to_string(L) + ")");
  }
  if (j + 1 == i) {
    const std::size_t dim = i <= L ? state.shape().layer_cols(i) : state.shape().d_out;
    return identity(dim);
  }
  Mat out = state.weight(i);
  for (std::size_t k = i + 1; k <= j; ++k) {
    out = state.weight(k) * out;
  }
  return out;
}

PartialProducts partial_products(const NetworkState& state, const Mat& x) {
  const std::size_t L = state.depth();
  if (static_cast<std::size_t>(x.rows()) != state.shape().d_in) {
    throw InvalidDimension("input has " + std::to_string(x.rows()) + " rows, network expects d_in = " +
                           std::to_string(state.shape().d_in));
  }
  PartialProducts p;
  p.left.resize(L + 1);
  p.right.resize(L + 1);
  p.left[0] = x;
  for (std::size_t k = 1; k <= L; ++k) {
    p.left[k] = state.weight(k) * p.left[k - 1];
  }
  p.right[L] = identity(state.shape().d_out);
  for (std::size_t k = L; k-- > 0;) {
    p.right[k] = p.right[k + 1] * state.weight(k + 1);
  }
  return p;
}

Mat predict(const NetworkState& state, const Mat& x) {
  if (static_cast<std::size_t>(x.rows()) != state.shape().d_in) {
    throw InvalidDimension("predict: input has " + std::to_string(x.rows()) +
                           " rows, network expects d_in = " + std::to_string(state.shape().d_in));
  }
  Mat h = x;
  for (const Mat& w : state.weights()) {
    h = w * h;
  }
  return state.scale() * h;
}

double loss(const NetworkState& state, const Mat& x, const Mat& y) {
  const Mat u = predict(state, x);
  if (u.rows() != y.rows() || u.cols() != y.cols()) {
    throw InvalidDimension("loss: prediction and labels differ in shape");
  }
  return 0.5 * (u - y).squaredNorm();
}

double loss(const NetworkState& state, const ProblemInstance& inst) {
  return loss(state, inst.xbar, inst.ybar);
}

std::vector<Mat> gradients(const NetworkState& state, const PartialProducts& products,
                           const Mat& y) {
  const std::size_t L = state.depth();
  const Mat residual = state.scale() * products.left[L] - y;
  if (residual.rows() != y.rows() || residual.cols() != y.cols()) {
    throw InvalidDimension("gradients: prediction and labels differ in shape");
  }
  std::vector<Mat> grads(L);
  for (std::size_t i = 1; i <= L; ++i) {
    const Mat tail = residual * products.left[i - 1].transpose();  // d_out x cols(W_i)
    grads[i - 1] = state.scale() * (products.right[i].transpose() * tail);
  }
  return grads;
}

std::vector<Mat> gradients(const NetworkState& state, const Mat& x, const Mat& y) {
  if (y.cols() != x.cols() || static_cast<std::size_t>(y.rows()) != state.shape().d_out) {
    throw InvalidDimension("gradients: labels must be d_out x n");
  }
  return gradients(state, partial_products(state, x), y);
}

std::vector<Mat> gradients(const NetworkState& state, const ProblemInstance& inst) {
  return gradients(state, inst.xbar, inst.ybar);
}

}  // namespace dln
