#include <gtest/gtest.h>

#include <cmath>

#include "dln/errors.hpp"
#include "dln/problem.hpp"
#include "oracles.hpp"

using dln::Mat;

namespace {

dln::RawDataset low_rank_data(std::uint64_t seed, int d_in, int d_out, int n, int rank) {
  dln::Prng p(seed);
  const Mat x = dln::gaussian_matrix(p, d_in, rank) * dln::gaussian_matrix(p, rank, n);
  const Mat y = dln::gaussian_matrix(p, d_out, n);
  return {x, y};
}

}  // namespace

TEST(RawDataset, ValidateRejectsMismatchAndNan) {
  dln::RawDataset d{Mat::Ones(2, 3), Mat::Ones(1, 4)};
  EXPECT_THROW(d.validate(), dln::InvalidDimension);
  d.y = Mat::Ones(1, 3);
  EXPECT_NO_THROW(d.validate());
  d.x(0, 0) = NAN;
  EXPECT_THROW(d.validate(), dln::NumericInput);
}

TEST(SolveRegression, ExactFitHasZeroOpt) {
  dln::Prng p(1);
  const Mat x = dln::gaussian_matrix(p, 3, 10);
  const Mat phi = dln::gaussian_matrix(p, 2, 3);
  const auto sol = dln::solve_regression({x, phi * x});
  EXPECT_LT(oracle::rel_diff(sol.phi, phi), 1e-12);
  EXPECT_NEAR(sol.opt, 0.0, 1e-20);
}

TEST(SolveRegression, NormalEquationsHold) {
  const auto data = low_rank_data(2, 5, 3, 40, 3);
  const auto sol = dln::solve_regression(data);
  // Residual is orthogonal to the row space of X.
  const Mat res = sol.phi * data.x - data.y;
  EXPECT_LT((res * data.x.transpose()).norm(), 1e-9 * data.y.norm() * data.x.norm());
  EXPECT_NEAR(sol.opt, 0.5 * res.squaredNorm(), 1e-10);
  // Minimum norm: phi lies in the column space of X, i.e. phi P_null = 0.
  const Mat proj = Mat::Identity(5, 5) - data.x * dln::pseudoinverse(data.x);
  EXPECT_LT((sol.phi * proj).norm(), 1e-9);
}

TEST(ReduceInstance, LossOffsetIsOptForAnyWeights) {
  const auto data = low_rank_data(3, 6, 2, 50, 4);
  const auto inst = dln::reduce_instance(data);
  EXPECT_EQ(inst.r, 4u);
  EXPECT_EQ(inst.xbar.rows(), 6);
  EXPECT_EQ(inst.xbar.cols(), 4);
  dln::Prng p(30);
  for (int k = 0; k < 5; ++k) {
    const Mat w = dln::gaussian_matrix(p, 2, 6);
    const double raw = 0.5 * (w * data.x - data.y).squaredNorm();
    const double red = 0.5 * (w * inst.xbar - inst.ybar).squaredNorm();
    EXPECT_NEAR(raw, red + inst.opt, 1e-9 * raw);
  }
}

TEST(ReduceInstance, PreservesSecondMoment) {
  const auto data = low_rank_data(4, 5, 1, 30, 5);
  const auto inst = dln::reduce_instance(data);
  const Mat a = data.x * data.x.transpose();
  const Mat b = inst.xbar * inst.xbar.transpose();
  EXPECT_LT(oracle::rel_diff(a, b), 1e-12);
  // Columns are orthogonal with descending norms.
  const Mat g = inst.xbar.transpose() * inst.xbar;
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      if (i != j) {
        EXPECT_NEAR(g(i, j), 0.0, 1e-10 * g(0, 0));
      }
  for (Eigen::Index i = 1; i < g.rows(); ++i) EXPECT_LE(g(i, i), g(i - 1, i - 1));
}

TEST(ReduceInstance, ZeroDataIsDegenerate) {
  EXPECT_THROW(dln::reduce_instance({Mat::Zero(3, 5), Mat::Ones(1, 5)}), dln::DegenerateInstance);
}

TEST(MakeInstance, StatsAndRankCheck) {
  Mat x = Mat::Zero(3, 2);
  x(0, 0) = 2;
  x(1, 1) = 1;
  Mat phi(1, 3);
  phi << 1, 2, 2;
  const auto inst = dln::make_instance(x, phi);
  EXPECT_DOUBLE_EQ(inst.sigma_max, 2.0);
  EXPECT_DOUBLE_EQ(inst.sigma_min, 1.0);
  EXPECT_DOUBLE_EQ(inst.kappa, 4.0);
  EXPECT_NEAR(inst.phi_norm, 3.0, 1e-14);
  EXPECT_LT(oracle::rel_diff(inst.ybar, phi * x), 1e-15);
  const auto st = dln::instance_stats(inst);
  EXPECT_EQ(st.r, 2u);

  Mat bad = x;
  bad.col(1) = bad.col(0);
  EXPECT_THROW(dln::make_instance(bad, phi), dln::DegenerateInstance);
}

TEST(RandomInstance, HitsTargetSpectrumAndPhiScale) {
  for (double kappa : {1.0, 2.0, 4.0, 10.0}) {
    dln::Prng p(5);
    const auto inst = dln::random_instance(p, 10, 3, 5, kappa, 1.5);
    EXPECT_NEAR(inst.kappa, kappa, 1e-10 * kappa);
    EXPECT_NEAR(inst.sigma_min, 1.0, 1e-12);
    EXPECT_NEAR(inst.phi_norm, 1.5, 1e-12);
    EXPECT_EQ(inst.r, 5u);
    const auto sv = oracle::singular_values(inst.xbar);
    EXPECT_NEAR(sv.front() * sv.front() / (sv.back() * sv.back()), kappa, 1e-8 * kappa);
  }
}

TEST(RandomInstance, DeterministicAndValidated) {
  dln::Prng a(7), b(7);
  const auto i1 = dln::random_instance(a, 6, 2, 3, 3.0, 1.0);
  const auto i2 = dln::random_instance(b, 6, 2, 3, 3.0, 1.0);
  EXPECT_EQ(i1.xbar, i2.xbar);
  EXPECT_EQ(i1.phi, i2.phi);
  dln::Prng p(1);
  EXPECT_THROW(dln::random_instance(p, 4, 2, 1, 2.0, 1.0), dln::InvalidInput);
  EXPECT_THROW(dln::random_instance(p, 4, 2, 5, 2.0, 1.0), dln::InvalidDimension);
  EXPECT_THROW(dln::random_instance(p, 4, 2, 2, 0.5, 1.0), dln::InvalidInput);
}
