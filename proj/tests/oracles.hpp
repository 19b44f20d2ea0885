#pragma once

// Reference implementations used only by the tests. They take the slow, obvious route
// (loops, Jacobi rotations, finite differences) and share no code with the library
// beyond the Mat type.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Mat = Eigen::MatrixXd;

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c = Mat::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
inline std::vector<double> jacobi_eigenvalues(Mat a) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

/// Singular values from Jacobi on the Gram of the smaller side, descending.
inline std::vector<double> singular_values(const Mat& a) {
  const Mat g = a.rows() <= a.cols() ? matmul(a, transpose(a)) : matmul(transpose(a), a);
  auto ev = jacobi_eigenvalues(g);
  for (double& v : ev) v = std::sqrt(std::max(v, 0.0));
  return ev;
}

inline Mat kronecker(const Mat& a, const Mat& b) {
  Mat k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index p = 0; p < b.rows(); ++p)
        for (Eigen::Index q = 0; q < b.cols(); ++q)
          k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return k;
}

/// Column-stacking vec.
inline std::vector<double> vec(const Mat& a) {
  std::vector<double> v;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) v.push_back(a(i, j));
  return v;
}

/// s * W_L ... W_1 X by explicit loops.
inline Mat predict(const std::vector<Mat>& w, const Mat& x, double scale) {
  Mat u = x;
  for (const Mat& wi : w) u = matmul(wi, u);
  return scale * u;
}

inline double loss(const std::vector<Mat>& w, const Mat& x, const Mat& y, double scale) {
  const Mat d = predict(w, x, scale) - y;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) acc += d(i, j) * d(i, j);
  return 0.5 * acc;
}

/// Central differences of f with respect to every weight entry.
inline std::vector<Mat> fd_gradients(const std::vector<Mat>& w0,
                                     const std::function<double(const std::vector<Mat>&)>& f,
                                     double h = 1e-5) {
  std::vector<Mat> w = w0, g;
  for (std::size_t i = 0; i < w.size(); ++i) {
    Mat gi(w[i].rows(), w[i].cols());
    for (Eigen::Index r = 0; r < w[i].rows(); ++r)
      for (Eigen::Index c = 0; c < w[i].cols(); ++c) {
        const double orig = w[i](r, c);
        w[i](r, c) = orig + h;
        const double up = f(w);
        w[i](r, c) = orig - h;
        const double dn = f(w);
        w[i](r, c) = orig;
        gi(r, c) = (up - dn) / (2.0 * h);
      }
    g.push_back(gi);
  }
  return g;
}

/// J J^T with J = d vec(U) / d theta. U is affine in each single weight entry, so the
/// central difference is exact up to rounding.
inline Mat jacobian_gram(const std::vector<Mat>& w0, const Mat& x, double scale) {
  std::vector<Mat> w = w0;
  const Eigen::Index n = predict(w, x, scale).size();
  std::vector<std::vector<double>> cols;
  for (std::size_t i = 0; i < w.size(); ++i)
    for (Eigen::Index r = 0; r < w[i].rows(); ++r)
      for (Eigen::Index c = 0; c < w[i].cols(); ++c) {
        const double orig = w[i](r, c);
        w[i](r, c) = orig + 1.0;
        const auto up = vec(predict(w, x, scale));
        w[i](r, c) = orig - 1.0;
        const auto dn = vec(predict(w, x, scale));
        w[i](r, c) = orig;
        std::vector<double> col(static_cast<std::size_t>(n));
        for (Eigen::Index k = 0; k < n; ++k)
          col[static_cast<std::size_t>(k)] = 0.5 * (up[static_cast<std::size_t>(k)] - dn[static_cast<std::size_t>(k)]);
        cols.push_back(col);
      }
  Mat p = Mat::Zero(n, n);
  for (const auto& col : cols)
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b)
        p(a, b) += col[static_cast<std::size_t>(a)] * col[static_cast<std::size_t>(b)];
  return p;
}

inline double rel_diff(const Mat& a, const Mat& b) {
  return (a - b).norm() / std::max(1e-300, std::max(a.norm(), b.norm()));
}

}  // namespace oracle
