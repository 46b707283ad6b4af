#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gfm/datagen.hpp"
#include "test_support.hpp"

using namespace gfm;
using namespace gfm::testing;

namespace {

GroundTruthd coordinate_truth(Index d) {
  GroundTruthd gt;
  gt.w_star = Vec::Zero(d);
  gt.u_star = Mat::Zero(d, 1);
  gt.u_star(0, 0) = 1.0;
  gt.lambda_star = Vec::Ones(1);
  return gt;
}

}  // namespace

TEST(SampleGroundTruth, ZeroWNormGivesExactZero) {
  const auto gt = sample_ground_truth<double>(12, 2, SpectrumSpec::condition(2, 3), 0.0, 0.0, 5);
  EXPECT_TRUE((gt.w_star.array() == 0.0).all());
}

TEST(SampleGroundTruth, WLiesOnSphere) {
  const auto gt = sample_ground_truth<double>(30, 3, SpectrumSpec::condition(3, 2), 2.5, 0.0, 9);
  EXPECT_NEAR(gt.w_star.norm(), 2.5, 1e-12);
}

TEST(SampleGroundTruth, ExplicitSignedSpectrum) {
  const auto gt =
      sample_ground_truth<double>(10, 2, SpectrumSpec::explicit_values({2.0, -1.0}), 1.0, 0.0, 1);
  EXPECT_EQ(gt.sigma(0), 2.0);
  EXPECT_EQ(gt.sigma(1), 1.0);
  EXPECT_EQ(gt.sigma_max() / gt.sigma_min(), 2.0);
  EXPECT_EQ(gt.lambda_star[1], -1.0);
}

TEST(SampleGroundTruth, ExplicitSpectrumIsSortedByMagnitude) {
  const auto gt = sample_ground_truth<double>(
      10, 3, SpectrumSpec::explicit_values({0.5, -3.0, 1.0}), 1.0, 0.0, 1);
  EXPECT_EQ(gt.lambda_star[0], -3.0);
  EXPECT_EQ(gt.lambda_star[1], 1.0);
  EXPECT_EQ(gt.lambda_star[2], 0.5);
}

TEST(SampleGroundTruth, MagnitudeTiesPutPositiveFirst) {
  const auto gt = sample_ground_truth<double>(
      10, 2, SpectrumSpec::explicit_values({-1.0, 1.0}), 1.0, 0.0, 1);
  EXPECT_EQ(gt.lambda_star[0], 1.0);
  EXPECT_EQ(gt.lambda_star[1], -1.0);
}

TEST(SampleGroundTruth, ConditionSpectrumHitsRatio) {
  const auto gt = sample_ground_truth<double>(
      20, 3, SpectrumSpec::condition(3, 5.0, SignPattern::all_positive), 1.0, 0.0, 4);
  EXPECT_NEAR(gt.sigma(0) / gt.sigma(2), 5.0, 5.0 * 1e-12);
  // Geometric interpolation: lambda_2^2 = lambda_1 lambda_3.
  EXPECT_NEAR(gt.lambda_star[1] * gt.lambda_star[1], gt.lambda_star[0] * gt.lambda_star[2], 1e-12);
  EXPECT_TRUE((gt.lambda_star.array() > 0).all());
}

TEST(SampleGroundTruth, AlternatingSigns) {
  const auto gt = sample_ground_truth<double>(
      20, 4, SpectrumSpec::condition(4, 8.0, SignPattern::alternating), 1.0, 0.0, 4);
  EXPECT_GT(gt.lambda_star[0], 0);
  EXPECT_LT(gt.lambda_star[1], 0);
  EXPECT_GT(gt.lambda_star[2], 0);
  EXPECT_LT(gt.lambda_star[3], 0);
}

TEST(SampleGroundTruth, BasisIsOrthonormal) {
  const auto gt = sample_ground_truth<double>(50, 5, SpectrumSpec::condition(5, 4), 1.0, 0.0, 3);
  EXPECT_LE((gt.u_star.transpose() * gt.u_star - Mat::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SampleGroundTruth, SameSeedSameTruth) {
  const auto spec = SpectrumSpec::condition(3, 4);
  const auto a = sample_ground_truth<double>(16, 3, spec, 1.0, 0.1, 77);
  const auto b = sample_ground_truth<double>(16, 3, spec, 1.0, 0.1, 77);
  EXPECT_EQ(a.u_star, b.u_star);
  EXPECT_EQ(a.w_star, b.w_star);
  EXPECT_EQ(a.lambda_star, b.lambda_star);
}

TEST(SampleGroundTruth, ResidualIsOrthogonalToTopSpace) {
  const auto spec = SpectrumSpec::explicit_values({1.0, -0.5}).with_residual(0.1, 0.5);
  const auto gt = sample_ground_truth<double>(12, 2, spec, 0.0, 0.0, 8);
  ASSERT_TRUE(gt.u_perp && gt.residual_spectrum);
  EXPECT_EQ(gt.residual_norm(), 0.1);
  EXPECT_LE((gt.u_star.transpose() * *gt.u_perp).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR((*gt.residual_spectrum)[1], 0.05, 1e-15);
}

TEST(SampleGroundTruth, Errors) {
  EXPECT_THROW(sample_ground_truth<double>(5, 5, SpectrumSpec::condition(5, 2), 1, 0, 1),
               InvalidArgument);
  EXPECT_THROW(sample_ground_truth<double>(5, 2, SpectrumSpec::explicit_values({1.0}), 1, 0, 1),
               InvalidArgument);
  EXPECT_THROW(
      sample_ground_truth<double>(5, 2, SpectrumSpec::explicit_values({1.0, 0.0}), 1, 0, 1),
      InvalidArgument);
  EXPECT_THROW(sample_ground_truth<double>(5, 2, SpectrumSpec::condition(3, 2), 1, 0, 1),
               InvalidArgument);
  EXPECT_THROW(sample_ground_truth<double>(5, 2, SpectrumSpec::condition(2, 0.5), 1, 0, 1),
               InvalidArgument);
  EXPECT_THROW(sample_ground_truth<double>(5, 2, SpectrumSpec::condition(2, INFINITY), 1, 0, 1),
               InvalidArgument);
  EXPECT_THROW(sample_ground_truth<double>(5, 2, SpectrumSpec::condition(2, 2), -1, 0, 1),
               InvalidArgument);
  EXPECT_THROW(sample_ground_truth<double>(5, 2, SpectrumSpec::condition(2, 2), 1, -0.1, 1),
               InvalidArgument);
  const auto big_residual =
      SpectrumSpec::explicit_values({1.0, -0.5}).with_residual(0.5, 0.5);
  EXPECT_THROW(sample_ground_truth<double>(8, 2, big_residual, 1, 0, 1), InvalidArgument);
}

TEST(SampleBatch, SquaredFirstCoordinate) {
  const auto gt = coordinate_truth(6);
  CounterRng rng(11);
  const auto batch = sample_batch(gt, 40, rng);
  for (Index i = 0; i < 40; ++i) EXPECT_EQ(batch.y[i], batch.x(0, i) * batch.x(0, i));
}

TEST(SampleBatch, MatchesDenseQuadraticForm) {
  const auto spec = SpectrumSpec::condition(3, 4).with_residual(0.05, 0.7);
  const auto gt = sample_ground_truth<double>(16, 3, spec, 1.3, 0.0, 21);
  const Mat m = densify_truth(gt);
  CounterRng rng(12);
  const auto batch = sample_batch(gt, 600, rng);  // spans several instance chunks
  for (Index i = 0; i < batch.size(); ++i) {
    const auto x = batch.x.col(i);
    const double dense = x.dot(m * x) + x.dot(gt.w_star);
    EXPECT_LE(rel_diff(batch.y[i], dense), 1e-10) << "i=" << i;
  }
}

TEST(SampleBatch, MeanLabelIsTrace) {
  const auto gt =
      sample_ground_truth<double>(10, 2, SpectrumSpec::explicit_values({1.0, 0.6}), 0.0, 0.0, 3);
  CounterRng rng(13);
  const Index n = 100000;
  const auto batch = sample_batch(gt, n, rng);
  const double mean = batch.y.mean();
  const double sd = std::sqrt((batch.y.array() - mean).square().sum() / double(n - 1));
  EXPECT_NEAR(mean, gt.lambda_star.sum(), 5.0 * sd / std::sqrt(double(n)));
}

TEST(SampleBatch, NoiseHasRequestedSpread) {
  auto gt = coordinate_truth(4);
  gt.lambda_star[0] = 1e-300;  // labels are essentially pure noise
  gt.noise_proxy = 0.5;
  CounterRng rng(14);
  const Index n = 40000;
  const auto batch = sample_batch(gt, n, rng);
  const double sd = std::sqrt(batch.y.array().square().mean());
  EXPECT_NEAR(sd, 0.5, 0.5 * 4.0 / std::sqrt(2.0 * n));
}

TEST(SampleBatch, RejectsEmptyBatch) {
  CounterRng rng(1);
  EXPECT_THROW(sample_batch(coordinate_truth(3), 0, rng), InvalidArgument);
}

TEST(Stream, SameSeedIsBitIdentical) {
  const auto gt = sample_ground_truth<double>(9, 2, SpectrumSpec::condition(2, 2), 1.0, 0.2, 4);
  auto a = open_stream(gt, 30, 99);
  auto b = open_stream(gt, 30, 99);
  for (int t = 0; t < 4; ++t) {
    const auto ba = a.next_batch();
    const auto bb = b.next_batch();
    EXPECT_EQ(ba.x, bb.x);
    EXPECT_EQ(ba.y, bb.y);
  }
}

TEST(Stream, DifferentSeedsDiffer) {
  const auto gt = sample_ground_truth<double>(9, 2, SpectrumSpec::condition(2, 2), 1.0, 0.0, 4);
  EXPECT_NE(open_stream(gt, 10, 1).next_batch().x, open_stream(gt, 10, 2).next_batch().x);
}

TEST(Stream, BatchShape) {
  const auto gt = sample_ground_truth<double>(9, 2, SpectrumSpec::condition(2, 2), 1.0, 0.0, 4);
  auto s = open_stream(gt, 37, 5);
  const auto b = s.next_batch();
  EXPECT_EQ(b.x.rows(), 9);
  EXPECT_EQ(b.x.cols(), 37);
  EXPECT_EQ(b.y.size(), 37);
  EXPECT_EQ(s.batches_served(), 1);
  EXPECT_EQ(s.dim(), 9);
  EXPECT_EQ(s.batch_size(), 37);
}

TEST(Stream, SuccessiveBatchesUncorrelated) {
  const auto gt = sample_ground_truth<double>(20, 2, SpectrumSpec::condition(2, 2), 1.0, 0.0, 4);
  auto s = open_stream(gt, 500, 6);
  const Mat a = s.next_batch().x;
  const Mat b = s.next_batch().x;
  const auto va = a.reshaped().array() - a.mean();
  const auto vb = b.reshaped().array() - b.mean();
  const double r = (va * vb).sum() / std::sqrt(va.square().sum() * vb.square().sum());
  EXPECT_LT(std::abs(r), 4.0 / std::sqrt(double(a.size())));
}

TEST(Stream, EntryMarginals) {
  const auto gt = sample_ground_truth<double>(40, 2, SpectrumSpec::condition(2, 2), 1.0, 0.0, 4);
  auto s = open_stream(gt, 500, 7);
  for (int t = 0; t < 3; ++t) {
    const Mat x = s.next_batch().x;
    const double nd = double(x.size());
    const double mean = x.mean();
    const double var = (x.array() - mean).square().sum() / (nd - 1);
    EXPECT_LE(std::abs(mean), 4.0 / std::sqrt(nd));
    EXPECT_NEAR(var, 1.0, 8.0 / std::sqrt(nd));
  }
}

TEST(Stream, BatchIsPureFunctionOfIndex) {
  const auto gt = sample_ground_truth<double>(7, 1, SpectrumSpec::condition(1, 1), 1.0, 0.3, 4);
  auto s = open_stream(gt, 12, 8);
  s.next_batch();
  s.next_batch();
  const auto third = s.next_batch();
  EXPECT_EQ(third.x, s.batch_at(2).x);
  EXPECT_EQ(third.y, s.batch_at(2).y);
  s.seek(2);
  EXPECT_EQ(s.next_batch().y, third.y);
}

TEST(Stream, NoInstanceServedTwice) {
  const auto gt = sample_ground_truth<double>(5, 1, SpectrumSpec::condition(1, 1), 1.0, 0.0, 4);
  auto s = open_stream(gt, 64, 9);
  const Index T = 20;
  std::set<std::vector<double>> seen;
  for (Index t = 0; t < T; ++t) {
    const auto b = s.next_batch();
    for (Index i = 0; i < b.size(); ++i)
      seen.insert(std::vector<double>(b.x.col(i).data(), b.x.col(i).data() + 5));
  }
  EXPECT_EQ(static_cast<Index>(seen.size()), T * 64);
}

TEST(Stream, RejectsZeroBatchSize) {
  const auto gt = sample_ground_truth<double>(5, 1, SpectrumSpec::condition(1, 1), 1.0, 0.0, 4);
  EXPECT_THROW(open_stream(gt, 0, 1), InvalidArgument);
}

TEST(SampleBatch, FloatScalarBuilds) {
  const auto gt = sample_ground_truth<float>(6, 1, SpectrumSpec::condition(1, 1), 1.0, 0.0, 4);
  CounterRng rng(3);
  const auto b = sample_batch(gt, 5, rng);
  EXPECT_EQ(b.y.size(), 5);
}
