#include <gtest/gtest.h>

#include <algorithm>

#include "gfm/datagen.hpp"
#include "gfm/model.hpp"
#include "test_support.hpp"

using namespace gfm;
using namespace gfm::testing;

TEST(Predict, ZeroModelIsZero) {
  const auto model = GfmModeld::zero(5, 2);
  CounterRng rng(1);
  EXPECT_EQ(predict(model, gaussian_vector<double>(5, rng)), 0.0);
}

TEST(Predict, RankOneCoordinateCase) {
  GfmModeld model = GfmModeld::zero(2, 1);
  model.u(0, 0) = 1.0;
  model.v(0, 0) = 1.0;
  Vec x(2);
  x << 3.0, 5.0;
  EXPECT_EQ(predict(model, x), 9.0);
}

TEST(Predict, MatchesDenseQuadraticForm) {
  CounterRng rng(2);
  const auto model = random_model(8, 3, rng);
  const Vec x = gaussian_vector<double>(8, rng);
  const double dense = x.dot(model.w) + x.dot(densify(model) * x);
  EXPECT_LE(rel_diff(predict(model, x), dense), 1e-12);
}

TEST(Predict, RandomizedAgreementUpToD64) {
  CounterRng rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    const Index d = 2 + static_cast<Index>(rng.next_u64() % 63);
    const Index k = 1 + static_cast<Index>(rng.next_u64() % std::min<Index>(d - 1, 6));
    const auto model = random_model(d, k, rng);
    const Vec x = gaussian_vector<double>(d, rng);
    const double dense = x.dot(densify(model) * x) + x.dot(model.w);
    EXPECT_LE(rel_diff(predict(model, x), dense), 1e-10) << "d=" << d << " k=" << k;
  }
}

TEST(Predict, DimensionMismatchNamesAxis) {
  const auto model = GfmModeld::zero(4, 1);
  try {
    predict(model, Vec::Zero(3));
    FAIL() << "expected DimensionMismatch";
  } catch (const DimensionMismatch& e) {
    EXPECT_EQ(e.expected(), 4);
    EXPECT_EQ(e.actual(), 3);
    EXPECT_NE(e.axis().find("(d)"), std::string::npos);
  }
}

TEST(Densify, ZeroAndCoordinateCases) {
  EXPECT_TRUE(densify(GfmModeld::zero(4, 2)).isZero(0));
  GfmModeld model = GfmModeld::zero(3, 1);
  model.u(0, 0) = model.v(0, 0) = 1.0;
  Mat expected = Mat::Zero(3, 3);
  expected(0, 0) = 1.0;
  EXPECT_EQ(densify(model), expected);
}

TEST(Densify, ExactlySymmetric) {
  CounterRng rng(4);
  const auto model = random_model(6, 2, rng);
  const Mat m = densify(model);
  EXPECT_TRUE((m.array() == m.transpose().array()).all());
}

TEST(Densify, RefusesAboveOracleCap) {
  const auto model = GfmModeld::zero(kDefaultOracleCap + 1, 1);
  EXPECT_THROW(densify(model), OracleCapExceeded);
  EXPECT_NO_THROW(densify(model, kDefaultOracleCap + 1));
  GroundTruthd gt = sample_ground_truth<double>(300, 1, SpectrumSpec::explicit_values({1.0}), 0, 0, 1);
  EXPECT_THROW(densify_truth(gt), OracleCapExceeded);
}

TEST(DensifyTruth, RankOneCoordinate) {
  GroundTruthd gt;
  gt.w_star = Vec::Zero(3);
  gt.u_star = Mat::Zero(3, 1);
  gt.u_star(0, 0) = 1.0;
  gt.lambda_star = Vec::Ones(1);
  Mat expected = Mat::Zero(3, 3);
  expected(0, 0) = 1.0;
  EXPECT_EQ(densify_truth(gt), expected);
}

TEST(DensifyTruth, SpectrumIncludesResidual) {
  const auto spec = SpectrumSpec::explicit_values({2.0, -1.5}).with_residual(0.4, 0.7);
  const auto gt = sample_ground_truth<double>(12, 2, spec, 1.0, 0.0, 9);
  const Mat m = densify_truth(gt);
  EXPECT_TRUE((m.array() == m.transpose().array()).all());

  std::vector<double> expected(gt.lambda_star.data(), gt.lambda_star.data() + 2);
  for (Index j = 0; j < gt.residual_spectrum->size(); ++j) expected.push_back((*gt.residual_spectrum)[j]);
  std::sort(expected.begin(), expected.end());
  Eigen::SelfAdjointEigenSolver<Mat> eig(m);
  for (Index i = 0; i < m.rows(); ++i)
    EXPECT_NEAR(eig.eigenvalues()[i], expected[static_cast<std::size_t>(i)], 1e-10);
}

TEST(DensifyTruth, TopEigenvectorsSpanUStar) {
  const auto spec = SpectrumSpec::explicit_values({1.0, -0.8, 0.6}).with_residual(0.3, 0.5);
  const auto gt = sample_ground_truth<double>(20, 3, spec, 0.0, 0.0, 5);
  Eigen::SelfAdjointEigenSolver<Mat> eig(densify_truth(gt));
  // Top three by magnitude.
  std::vector<Index> idx(20);
  for (Index i = 0; i < 20; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    return std::abs(eig.eigenvalues()[a]) > std::abs(eig.eigenvalues()[b]);
  });
  Mat top(20, 3);
  for (Index j = 0; j < 3; ++j) top.col(j) = eig.eigenvectors().col(idx[static_cast<std::size_t>(j)]);
  EXPECT_LE(canonical_angles(top, gt.u_star).tan_theta, 1e-8);
}

TEST(SolverConfig, Validation) {
  SolverConfig cfg{.d = 4, .k = 8, .n = 10, .t_max = 1};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.k = 2;
  EXPECT_NO_THROW(cfg.validate());
  cfg.n = 1;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}
