#include <gtest/gtest.h>

#include <cmath>

#include "dln/errors.hpp"
#include "dln/harness.hpp"
#include "dln/trainer.hpp"
#include "oracles.hpp"

using dln::Mat;

namespace {

dln::ProblemInstance diag_instance(std::size_t d_out, std::vector<double> sv) {
  const auto r = static_cast<Eigen::Index>(sv.size());
  Mat x = Mat::Zero(r, r);
  for (Eigen::Index i = 0; i < r; ++i) x(i, i) = sv[static_cast<std::size_t>(i)];
  return dln::make_instance(x, Mat::Ones(static_cast<Eigen::Index>(d_out), r));
}

}  // namespace

TEST(MaxLearningRate, FormulaExamples) {
  EXPECT_NEAR(dln::max_learning_rate(diag_instance(1, {1.0}), 3), 1.0 / 9.0, 1e-15);
  EXPECT_NEAR(dln::max_learning_rate(diag_instance(3, {2.0, 1.0}), 3), 1.0 / 12.0, 1e-15);
}

TEST(ConvergenceModel, PerStepRatioAtUnitKappa) {
  const auto inst = diag_instance(2, {1.0, 1.0});
  const double eta = dln::max_learning_rate(inst, 4);
  const auto model = dln::make_convergence_model(inst, 4, eta, 2.0);
  EXPECT_NEAR(model.per_step_ratio, 1.0 - 1.0 / 12.0, 1e-15);
  EXPECT_NEAR(model.gamma, 4.0 / 8.0, 1e-15);
  EXPECT_NEAR(model.lambda_r, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(dln::predicted_loss_bound(0, model), 2.0);
  EXPECT_NEAR(dln::predicted_loss_bound(3, model), 2.0 * std::pow(11.0 / 12.0, 3), 1e-14);
}

TEST(RequiredWidth, WorkedExample) {
  const auto req = dln::width_requirement(3, 2, 1.0, 1, 1.0, 0.1, 1.0);
  EXPECT_EQ(req.width, 18u);
  EXPECT_EQ(req.dominant, dln::WidthTerm::Confidence);
  EXPECT_NEAR(req.spectral_term, 4.0, 1e-15);
  EXPECT_NEAR(req.confidence_term, 2.0 * std::log(20.0), 1e-14);
  EXPECT_NEAR(req.depth_term, std::log(3.0), 1e-15);
  EXPECT_EQ(dln::required_width(3, 2, 1.0, 1, 1.0, 0.1, 1.0), 18u);
}

TEST(RequiredWidth, MonotoneInEveryArgument) {
  const auto base = dln::required_width(3, 3, 2.0, 2, 1.0, 0.1, 1.0);
  EXPECT_GE(dln::required_width(4, 3, 2.0, 2, 1.0, 0.1, 1.0), base);
  EXPECT_GE(dln::required_width(3, 4, 2.0, 2, 1.0, 0.1, 1.0), base);
  EXPECT_GE(dln::required_width(3, 3, 3.0, 2, 1.0, 0.1, 1.0), base);
  EXPECT_GE(dln::required_width(3, 3, 2.0, 3, 1.0, 0.1, 1.0), base);
  EXPECT_GE(dln::required_width(3, 3, 2.0, 2, 2.0, 0.1, 1.0), base);
  EXPECT_GE(dln::required_width(3, 3, 2.0, 2, 1.0, 0.01, 1.0), base);
  EXPECT_GE(dln::required_width(3, 3, 2.0, 2, 1.0, 0.1, 2.0), base);
}

TEST(GdStep, WorkedExampleOneStep) {
  const auto st = dln::tiny_worked_state();
  const auto inst = dln::tiny_worked_instance();
  const auto next = dln::gd_step(st, inst, 0.1);
  const double s = 1.0 / std::sqrt(3.0);
  EXPECT_NEAR(next.weight(2)(0, 0), 1.0 - 0.1 * s * (s - 1), 1e-15);
  EXPECT_NEAR(next.weight(2)(0, 1), 1.0 - 0.1 * s * (s - 2), 1e-15);
  EXPECT_EQ(next.weight(2)(0, 2), 1.0);
  EXPECT_NEAR(next.weight(2)(0, 0), 1.024402, 1e-6);
  EXPECT_NEAR(next.weight(2)(0, 1), 1.082137, 1e-6);
}

TEST(GdStep, SimultaneousUpdate) {
  dln::Prng p(1);
  const auto st = dln::init_xavier({3, 4, 3, 2}, p);
  const Mat x = dln::gaussian_matrix(p, 3, 5), y = dln::gaussian_matrix(p, 2, 5);
  const auto g = dln::gradients(st, x, y);
  const auto next = dln::gd_step(st, x, y, 0.01);
  for (std::size_t i = 1; i <= 3; ++i) {
    EXPECT_EQ(next.weight(i), st.weight(i) - 0.01 * g[i - 1]);
  }
}

TEST(GdStep, NonFiniteRaisesDivergenceWithIteration) {
  const auto st = dln::tiny_worked_state();
  std::vector<Mat> g = {Mat::Zero(3, 2), Mat::Zero(1, 3)};
  g[1](0, 0) = NAN;
  try {
    dln::apply_step(st, g, 0.1, 17);
    FAIL() << "expected Divergence";
  } catch (const dln::Divergence& e) {
    EXPECT_EQ(e.iteration(), 17u);
  }
}

class TrainFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    dln::Prng ip(0, dln::kInstanceStream);
    inst = dln::random_instance(ip, 6, 2, 3, 2.0, 1.0);
    dln::Prng p(5, dln::kInitStream);
    state0.emplace(dln::init_xavier({3, 64, 6, 2}, p));
  }
  dln::ProblemInstance inst;
  std::optional<dln::NetworkState> state0;
};

TEST_F(TrainFixture, MonotoneDecreaseAndEnvelopeOnWideNetwork) {
  dln::TrainConfig cfg;
  cfg.eta = dln::max_learning_rate(inst, 3);
  cfg.max_iters = 200;
  const auto traj = dln::train(*state0, inst, cfg);
  ASSERT_EQ(traj.losses.size(), 201u);
  // Once the loss reaches the rounding floor (~1e-30 here) it jitters; allow that much.
  const double floor = 1e-28 * traj.losses[0];
  for (std::size_t t = 1; t < traj.losses.size(); ++t) {
    EXPECT_LE(traj.losses[t], traj.losses[t - 1] + floor) << "t=" << t;
    EXPECT_LE(traj.losses[t], dln::predicted_loss_bound(t, traj.model) * (1 + 1e-12));
  }
  EXPECT_EQ(traj.termination, dln::Termination::MaxIters);
}

TEST_F(TrainFixture, Deterministic) {
  dln::TrainConfig cfg;
  cfg.eta = dln::max_learning_rate(inst, 3);
  cfg.max_iters = 30;
  const auto a = dln::train(*state0, inst, cfg);
  const auto b = dln::train(*state0, inst, cfg);
  EXPECT_EQ(a.losses, b.losses);
  for (std::size_t i = 1; i <= 3; ++i) EXPECT_EQ(a.final_state.weight(i), b.final_state.weight(i));
}

TEST_F(TrainFixture, SnapshotsAtStrideAndEnd) {
  dln::TrainConfig cfg;
  cfg.eta = dln::max_learning_rate(inst, 3);
  cfg.max_iters = 25;
  cfg.record_stride = 10;
  const auto traj = dln::train(*state0, inst, cfg);
  std::vector<std::size_t> ts;
  for (const auto& r : traj.records) ts.push_back(r.t);
  EXPECT_EQ(ts, (std::vector<std::size_t>{0, 10, 20, 25}));
  EXPECT_EQ(traj.records.front().max_drift, 0.0);
  EXPECT_DOUBLE_EQ(traj.records.front().loss, traj.model.ell0);
}

TEST_F(TrainFixture, ZeroIterationsRecordsInitialStateOnly) {
  dln::TrainConfig cfg;
  cfg.eta = dln::max_learning_rate(inst, 3);
  cfg.max_iters = 0;
  const auto traj = dln::train(*state0, inst, cfg);
  ASSERT_EQ(traj.records.size(), 1u);
  EXPECT_EQ(traj.records[0].t, 0u);
  EXPECT_EQ(traj.losses.size(), 1u);
}

TEST_F(TrainFixture, StopLossTerminatesAsConverged) {
  dln::TrainConfig cfg;
  cfg.eta = dln::max_learning_rate(inst, 3);
  cfg.max_iters = 10000;
  cfg.stop_loss = 1e-3;
  const auto traj = dln::train(*state0, inst, cfg);
  EXPECT_EQ(traj.termination, dln::Termination::Converged);
  EXPECT_LE(traj.losses.back(), 1e-3);
  EXPECT_GT(traj.losses[traj.losses.size() - 2], 1e-3);
}

TEST_F(TrainFixture, UnsafeLearningRateRejectedUnlessAllowed) {
  dln::TrainConfig cfg;
  cfg.eta = 2.0 * dln::max_learning_rate(inst, 3);
  cfg.max_iters = 5;
  EXPECT_THROW(dln::train(*state0, inst, cfg), dln::InvalidInput);
  cfg.allow_unsafe_eta = true;
  EXPECT_NO_THROW(dln::train(*state0, inst, cfg));
}

TEST_F(TrainFixture, HugeStepDiverges) {
  dln::TrainConfig cfg;
  cfg.eta = 1e4;
  cfg.allow_unsafe_eta = true;
  cfg.max_iters = 1000;
  const auto traj = dln::train(*state0, inst, cfg);
  EXPECT_EQ(traj.termination, dln::Termination::Diverged);
  EXPECT_LT(traj.losses.size(), 1001u);
}

TEST(Train, ReducedInstanceTracksRawLossUpToOpt) {
  dln::Prng p(12);
  const Mat x = dln::gaussian_matrix(p, 2, 100);
  const Mat y = dln::gaussian_matrix(p, 1, 100);
  const dln::RawDataset raw{x, y};
  const auto inst = dln::reduce_instance(raw);
  dln::Prng ip(3, dln::kInitStream);
  auto a = dln::init_xavier({2, 8, 2, 1}, ip);
  auto b = a;
  const double eta = 0.5 * dln::max_learning_rate(inst, 2);
  for (int t = 0; t < 20; ++t) {
    EXPECT_NEAR(dln::loss(a, x, y), dln::loss(b, inst) + inst.opt, 1e-8 * dln::loss(a, x, y));
    a = dln::gd_step(a, x, y, eta);
    b = dln::gd_step(b, inst, eta);
    for (std::size_t i = 1; i <= 2; ++i) {
      EXPECT_LT(oracle::rel_diff(a.weight(i), b.weight(i)), 1e-10);
    }
  }
}
