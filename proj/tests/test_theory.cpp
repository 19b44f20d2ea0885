#include <gtest/gtest.h>

#include <cmath>

#include "dln/errors.hpp"
#include "dln/harness.hpp"
#include "dln/theory.hpp"
#include "oracles.hpp"

using dln::Mat;

namespace {

constexpr std::size_t kNoLimit = std::numeric_limits<std::size_t>::max();

struct RandomState {
  dln::ProblemInstance inst;
  dln::NetworkState state;
};

RandomState random_state(std::uint64_t seed, dln::NetworkShape shape, std::size_t r, double kappa) {
  dln::Prng p(seed);
  auto inst = dln::random_instance(p, shape.d_in, shape.d_out, r, kappa, 1.0);
  auto st = dln::init_xavier(shape, p);
  return {std::move(inst), std::move(st)};
}

/// Sum of explicit Kronecker products, straight from the definition.
Mat gram_by_kronecker(const dln::NetworkState& st, const Mat& x) {
  const std::size_t L = st.depth();
  const double s = st.scale();
  Mat p;
  for (std::size_t i = 1; i <= L; ++i) {
    Mat left = x;
    for (std::size_t k = 1; k < i; ++k) left = oracle::matmul(st.weight(k), left);
    Mat right = Mat::Identity(static_cast<Eigen::Index>(st.shape().d_out),
                              static_cast<Eigen::Index>(st.shape().d_out));
    if (i < L) {
      right = st.weight(L);
      for (std::size_t k = L - 1; k > i; --k) right = oracle::matmul(right, st.weight(k));
    }
    const Mat term = s * s * oracle::kronecker(oracle::matmul(oracle::transpose(left), left),
                                               oracle::matmul(right, oracle::transpose(right)));
    p = i == 1 ? term : Mat(p + term);
  }
  return p;
}

}  // namespace

TEST(Gram, TinyWorkedInstanceIsFourThirdsIdentity) {
  const auto st = dln::tiny_worked_state();
  const auto inst = dln::tiny_worked_instance();
  const Mat p = dln::gram_matrix_exact(st, inst);
  EXPECT_LT((p - (4.0 / 3.0) * Mat::Identity(2, 2)).norm(), 1e-14);
  const auto gb = dln::gram_bounds(st, inst);
  EXPECT_NEAR(gb.lambda_min_lb, 4.0 / 3.0, 1e-14);
  EXPECT_NEAR(gb.lambda_max_ub, 4.0 / 3.0, 1e-14);
  ASSERT_TRUE(gb.exact_spectrum.has_value());
  EXPECT_NEAR(gb.exact_spectrum->front(), 4.0 / 3.0, 1e-14);
}

TEST(Gram, MatchesKroneckerAndJacobianOracles) {
  int k = 0;
  for (const dln::NetworkShape shape :
       {dln::NetworkShape{1, 3, 3, 2}, dln::NetworkShape{2, 3, 3, 2}, dln::NetworkShape{3, 2, 4, 3},
        dln::NetworkShape{4, 5, 2, 1}}) {
    const std::size_t r = std::min<std::size_t>(shape.d_in, 3);
    const auto rs = random_state(100 + k++, shape, r, r == 1 ? 1.0 : 2.5);
    const Mat p = dln::gram_matrix_exact(rs.state, rs.inst, kNoLimit);
    EXPECT_LT(oracle::rel_diff(p, gram_by_kronecker(rs.state, rs.inst.xbar)), 1e-13);
    EXPECT_LT(oracle::rel_diff(p, oracle::jacobian_gram(rs.state.weights(), rs.inst.xbar,
                                                        rs.state.scale())),
              1e-12);
    EXPECT_LT((p - p.transpose()).norm(), 1e-15 * p.norm());
  }
}

TEST(Gram, TooLargeAboveThreshold) {
  const auto rs = random_state(1, {2, 4, 9, 9}, 9, 2.0);  // P is 81 x 81
  EXPECT_FALSE(dln::gram_within_threshold(9, 9, dln::kExactGramThreshold));
  EXPECT_THROW(dln::gram_matrix_exact(rs.state, rs.inst), dln::TooLarge);
  EXPECT_FALSE(dln::gram_bounds(rs.state, rs.inst).exact_spectrum.has_value());
  EXPECT_TRUE(dln::gram_within_threshold(8, 8, dln::kExactGramThreshold));
}

// Property: the bounds sandwich the spectrum for every state.
TEST(Gram, BoundsSandwichSpectrumOnRandomStates) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const std::size_t L = 1 + seed % 4, m = 1 + seed % 5, d_in = 1 + seed % 4,
                      d_out = 1 + (seed / 4) % 3;
    const std::size_t r = 1 + seed % d_in;
    const auto rs = random_state(seed, {L, m, d_in, d_out}, r, r == 1 ? 1.0 : 3.0);
    const auto ev = oracle::jacobi_eigenvalues(dln::gram_matrix_exact(rs.state, rs.inst, kNoLimit));
    const auto gb = dln::gram_bounds(rs.state, rs.inst, 0);
    const double tol = 1e-9 * ev.front();
    EXPECT_LE(gb.lambda_min_lb, ev.back() + tol) << "seed " << seed;
    EXPECT_GE(gb.lambda_max_ub, ev.front() - tol) << "seed " << seed;
    EXPECT_GE(gb.lambda_min_lb, 0.0);
  }
}

TEST(ProductMargins, MatchOracleSingularValues) {
  const auto rs = random_state(7, {3, 6, 4, 2}, 3, 2.0);
  const auto& st = rs.state;
  const double m = 6.0;
  const auto g = dln::product_margins(st, rs.inst);
  const auto sx = oracle::singular_values(rs.inst.xbar);

  double lu = 0, ll = INFINITY;
  for (std::size_t i = 2; i <= 3; ++i) {
    Mat prod = st.weight(3);
    for (std::size_t k = 2; k >= i; --k) prod = oracle::matmul(prod, st.weight(k));
    const auto sv = oracle::singular_values(prod);
    const double norm = std::pow(m, (3.0 - i + 1) / 2.0);
    lu = std::max(lu, sv.front() / norm);
    ll = std::min(ll, sv.back() / norm);
  }
  EXPECT_NEAR(g.left_upper, lu, 1e-10);
  EXPECT_NEAR(g.left_lower, ll, 1e-10);

  double ru = 0, rl = INFINITY;
  Mat prod = rs.inst.xbar;
  for (std::size_t i = 1; i <= 2; ++i) {
    prod = oracle::matmul(st.weight(i), prod);
    const auto sv = oracle::singular_values(prod);
    const double norm = std::pow(m, i / 2.0);
    ru = std::max(ru, sv.front() / (norm * sx.front()));
    rl = std::min(rl, sv.back() / (norm * sx.back()));
  }
  EXPECT_NEAR(g.right_upper, ru, 1e-10);
  EXPECT_NEAR(g.right_lower, rl, 1e-10);

  // Only W_2 is a middle product at L = 3.
  EXPECT_FALSE(g.middle_vacuous);
  EXPECT_NEAR(g.middle, oracle::singular_values(st.weight(2)).front() / (std::sqrt(3.0) * std::sqrt(m)), 1e-10);
}

TEST(ProductMargins, DepthTwoHasNoMiddleProducts) {
  const auto rs = random_state(8, {2, 6, 3, 2}, 3, 2.0);
  const auto g = dln::product_margins(rs.state, rs.inst);
  EXPECT_TRUE(g.middle_vacuous);
  const auto c = dln::check_products(rs.state, rs.inst, 100.0, 0.0, 3.0);
  EXPECT_TRUE(c.middle_ok);
  EXPECT_TRUE(c.two_sided_ok);
}

TEST(InitProperties, WideNetworksPassNarrowOnesFail) {
  dln::Prng ip(1, dln::kInstanceStream);
  const auto inst = dln::random_instance(ip, 4, 2, 4, 2.0, 1.0);
  dln::Prng p(2, dln::kInitStream);
  EXPECT_TRUE(dln::check_init_properties(dln::init_xavier({3, 512, 4, 2}, p), inst).two_sided_ok);
  int narrow_pass = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    dln::Prng q(s, dln::kInitStream);
    narrow_pass += dln::check_init_properties(dln::init_xavier({12, 2, 4, 2}, q), inst).two_sided_ok;
  }
  EXPECT_LT(narrow_pass, 5);
}

TEST(DriftRadius, Formula) {
  const auto inst = dln::make_instance(Mat::Identity(2, 2) * 2.0, Mat::Ones(3, 2));
  // 24 sqrt(B d_out) sigma_max / (L sigma_min^2) with B = 4, d_out = 3, sigma = 2
  EXPECT_NEAR(dln::drift_radius(inst, 3, 4.0), 24.0 * std::sqrt(12.0) * 2.0 / (3.0 * 4.0), 1e-12);
}

TEST(InitLossBound, WorkedExample) {
  Mat phi = Mat::Zero(3, 5);
  phi(0, 0) = 1.0;
  const auto inst = dln::make_instance(Mat::Identity(5, 5), phi);
  const double b = dln::init_loss_bound(inst, 0.1, 3.0);
  EXPECT_NEAR(b, 5.0 * std::log(50.0), 1e-12);
  EXPECT_NEAR(b, 19.56, 5e-3);
}

TEST(ResidualE, MatchesBruteForceExpansion) {
  for (std::size_t L : {2u, 3u, 4u}) {
    const auto rs = random_state(20 + L, {L, 3, 3, 2}, 2, 2.0);
    const auto& st = rs.state;
    const auto g = dln::gradients(st, rs.inst);
    const double eta = 0.2;  // large step so E is far above rounding
    const auto next = dln::apply_step(st, g, eta);

    // prod (W + D) X - prod W X - sum_i (one D factor), all by plain loops.
    const Mat x = rs.inst.xbar;
    auto chain = [&](const std::vector<Mat>& w) {
      Mat u = x;
      for (const Mat& wi : w) u = oracle::matmul(wi, u);
      return u;
    };
    Mat first = Mat::Zero(2, x.cols());
    for (std::size_t i = 0; i < L; ++i) {
      std::vector<Mat> w = st.weights();
      w[i] = next.weights()[i] - st.weights()[i];
      first += chain(w);
    }
    const Mat ex = chain(next.weights()) - chain(st.weights()) - first;

    const auto gb = dln::gram_bounds(st, rs.inst, 0);
    const auto rep = dln::residual_E(st, next, g, eta, rs.inst, gb, kNoLimit);
    EXPECT_NEAR(rep.e_norm, st.scale() * ex.norm(), 1e-9 * st.scale() * ex.norm()) << "L=" << L;
    ASSERT_TRUE(rep.identity_residual.has_value());
    EXPECT_LT(*rep.identity_residual, 1e-12);
    const Mat du = st.scale() * (chain(next.weights()) - chain(st.weights()));
    EXPECT_NEAR(rep.delta_u_norm, du.norm(), 1e-12);
    const double res_norm = (dln::predict(st, x) - rs.inst.ybar).norm();
    EXPECT_NEAR(rep.budget, eta * gb.lambda_min_lb * res_norm / 6.0, 1e-14);
  }
}

TEST(ResidualE, VanishesForSingleLayer) {
  const auto rs = random_state(3, {1, 1, 3, 2}, 3, 2.0);
  const auto g = dln::gradients(rs.state, rs.inst);
  const auto next = dln::apply_step(rs.state, g, 0.1);
  const auto rep = dln::residual_E(rs.state, next, g, 0.1, rs.inst, dln::gram_bounds(rs.state, rs.inst));
  EXPECT_EQ(rep.e_norm, 0.0);
}

TEST(ResidualE, RejectsNonGradientStep) {
  const auto rs = random_state(4, {2, 3, 3, 2}, 2, 2.0);
  const auto g = dln::gradients(rs.state, rs.inst);
  const auto next = dln::apply_step(rs.state, g, 0.1);
  EXPECT_THROW(dln::residual_E(rs.state, next, g, 0.2, rs.inst, dln::gram_bounds(rs.state, rs.inst)),
               dln::PreconditionFailed);
}

TEST(Lemma1, WideConcentratesNarrowDoesNot) {
  const auto wide = dln::verify_lemma1(1024, 2, 8, 40, 1);
  EXPECT_GE(wide.coverage, 0.95);
  EXPECT_NEAR(wide.mean_ratio, 1.0, 0.02);
  const auto narrow = dln::verify_lemma1(8, 4, 16, 200, 1);
  EXPECT_LE(narrow.coverage, 0.8);
  // Worker count does not change results.
  const auto again = dln::verify_lemma1(8, 4, 16, 200, 1, 3);
  EXPECT_EQ(narrow.inside, again.inside);
  EXPECT_EQ(narrow.mean_ratio, again.mean_ratio);
}

TEST(Claim1, UnbiasedOutputNorm) {
  const dln::Vec x = dln::Vec::LinSpaced(3, 1.0, 3.0);
  const auto r = dln::verify_claim1({2, 16, 3, 2}, x, 4000, 9);
  EXPECT_NEAR(r.mean_ratio, 1.0, 5.0 * r.std_error);
  EXPECT_GT(r.std_error, 0.0);
}

TEST(TheoryProbe, OneReportPerSnapshot) {
  dln::Prng ip(0, dln::kInstanceStream);
  const auto inst = dln::random_instance(ip, 5, 2, 3, 2.0, 1.0);
  dln::Prng p(1, dln::kInitStream);
  const auto st = dln::init_xavier({3, 128, 5, 2}, p);
  dln::TrainConfig cfg;
  cfg.eta = dln::max_learning_rate(inst, 3);
  cfg.max_iters = 40;
  cfg.record_stride = 5;
  dln::TheoryProbe probe(inst, {});
  const auto traj = dln::train(st, inst, cfg, &probe);
  EXPECT_EQ(probe.reports().size(), traj.records.size());
  EXPECT_EQ(probe.steps(), 40u);
  for (const auto& rec : traj.records) {
    EXPECT_TRUE(rec.instrumented);
    EXPECT_TRUE(rec.a_ok);
    EXPECT_TRUE(rec.c_ok);
    EXPECT_LE(rec.lambda_min_lb, rec.lambda_max_ub);
    if (rec.t < 40) {
      EXPECT_LE(rec.e_norm, rec.e_budget);
    }
  }
  EXPECT_EQ(probe.e_violations(), 0u);
}
