#include <gtest/gtest.h>

#include "cmmi/aggregate.hpp"
#include "cmmi/random.hpp"
#include "cmmi/sim_harness.hpp"

using namespace cmmi;

namespace {

ObservedBlock constant_block(std::string id, std::vector<Index> ids, double value, Mask mask) {
  const Index n = static_cast<Index>(ids.size());
  return make_observed_block(std::move(id), EntityIndexSet(std::move(ids)), std::nullopt,
                             Matrix::Constant(n, n, value), std::move(mask));
}

ObservedBlock full_constant(std::string id, std::vector<Index> ids, double value) {
  const Index n = static_cast<Index>(ids.size());
  return constant_block(std::move(id), std::move(ids), value, Mask::Constant(n, n, true));
}

}  // namespace

TEST(EstimateNoise, NoiselessExactBlockIsZero) {
  CounterRng rng(1);
  const Matrix x = rng.gaussian_matrix(40, 3);
  const Matrix b = x * x.transpose();
  const auto est = estimate_noise(make_observed_block("a", EntityIndexSet::range(0, 40), b), 3);
  EXPECT_LE(est.sigma2_hat, 1e-16 * b.squaredNorm());
}

TEST(EstimateNoise, ConcentratesAroundTheNoiseVariance) {
  int inside = 0;
  for (int trial = 0; trial < 100; ++trial) {
    CounterRng rng = CounterRng::substream(4, static_cast<std::uint64_t>(trial), StreamTag::misc);
    const Matrix x = rng.gaussian_matrix(200, 3) * 3.0;
    Matrix b = x * x.transpose();
    for (Index j = 0; j < 200; ++j)
      for (Index i = 0; i <= j; ++i) {
        const double e = 0.5 * rng.normal();
        b(i, j) += e;
        if (i != j) b(j, i) += e;
      }
    const double s2 = estimate_noise(make_observed_block("a", EntityIndexSet::range(0, 200), b), 3).sigma2_hat;
    if (s2 >= 0.2 && s2 <= 0.3) ++inside;
  }
  EXPECT_GE(inside, 95);
}

TEST(EstimateNoise, ScalesQuadraticallyWithResidual) {
  // A symmetric block whose rank-1 fit is zero: values on a traceless
  // off-diagonal pattern with equal positive and negative spectrum.
  Matrix r(2, 2);
  r << 0, 1, 1, 0;
  const auto base = make_observed_block("a", EntityIndexSet::range(0, 2), r);
  const double s1 = estimate_noise(base, 1).sigma2_hat;
  const double s2 = estimate_noise(make_observed_block("a", EntityIndexSet::range(0, 2), 2 * r), 1).sigma2_hat;
  EXPECT_NEAR(s2, 4 * s1, 1e-12);
  EXPECT_THROW(estimate_noise(constant_block("z", {0, 1}, 1.0, Mask::Constant(2, 2, false)), 1), DataError);
}

TEST(Fuse, WeightedMeanOfObservers) {
  const std::vector<ObservedBlock> blocks{full_constant("a", {0, 1}, 10.0), full_constant("b", {0, 1}, 14.0)};
  const std::vector<NoiseEstimate> noise{{"a", 1.0}, {"b", 4.0}};
  const auto fused = fuse(blocks, noise);
  EXPECT_NEAR(fused.values(0, 1), 10.8, 1e-12);
  const std::vector<double> s2{1.0, 4.0};
  const Vector w = fusion_weights(s2);
  EXPECT_NEAR(w[0], 0.8, 1e-15);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
}

TEST(Fuse, SingleObserverEqualWeightsAndUnobserved) {
  const std::vector<ObservedBlock> blocks{full_constant("a", {0, 1}, 3.0), full_constant("b", {1, 2}, 6.0),
                                          full_constant("c", {1, 2}, 9.0)};
  const std::vector<NoiseEstimate> noise{{"a", 2.0}, {"b", 2.0}, {"c", 2.0}};
  const auto fused = fuse(blocks, noise);
  EXPECT_EQ(fused.values(0, 0), 3.0);
  EXPECT_NEAR(fused.values(1, 1), 6.0, 1e-12);  // (3 + 6 + 9) / 3
  EXPECT_NEAR(fused.values(2, 2), 7.5, 1e-12);
  EXPECT_FALSE(fused.mask(0, 2));
  EXPECT_FALSE(fused.mask(2, 0));
  EXPECT_TRUE(fused.values == fused.values.transpose());
}

TEST(Fuse, ZeroNoiseSourceWins) {
  const std::vector<ObservedBlock> blocks{full_constant("a", {0}, 1.0), full_constant("b", {0}, 5.0)};
  EXPECT_NEAR(fuse(blocks, std::vector<NoiseEstimate>{{"a", 0.0}, {"b", 1.0}}).values(0, 0), 1.0, 1e-10);
  EXPECT_NEAR(fuse(blocks, std::vector<NoiseEstimate>{{"a", 0.0}, {"b", 0.0}}).values(0, 0), 3.0, 1e-12);
}

TEST(Fuse, WeightsFormAProbabilityVector) {
  CounterRng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s2;
    const int k = 1 + static_cast<int>(rng.uniform() * 6);
    for (int i = 0; i < k; ++i) s2.push_back(rng.bernoulli(0.1) ? 0.0 : std::exp(rng.normal()));
    const Vector w = fusion_weights(s2);
    EXPECT_TRUE((w.array() >= 0).all());
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
  }
}

TEST(Redistribute, SingleBlockUnchanged) {
  Mask m = Mask::Constant(3, 3, true);
  m(0, 2) = m(2, 0) = false;
  Matrix v(3, 3);
  v << 1, 2, 0, 2, 3, 4, 0, 4, 5;
  const std::vector<ObservedBlock> blocks{
      make_observed_block("a", EntityIndexSet::range(0, 3), std::nullopt, v, m)};
  const auto out = aggregate(blocks, 1);
  EXPECT_EQ(out[0].values, blocks[0].values);
  EXPECT_TRUE((out[0].mask == blocks[0].mask).all());
  EXPECT_DOUBLE_EQ(*out[0].q, estimate_q(blocks[0]));
}

TEST(Redistribute, DisjointMasksBecomeTheirUnion) {
  Mask ma = Mask::Constant(2, 2, false), mb = Mask::Constant(2, 2, false);
  ma(0, 0) = true;
  ma(0, 1) = ma(1, 0) = true;
  mb(1, 1) = true;
  const std::vector<ObservedBlock> blocks{constant_block("a", {0, 1}, 1.0, ma), constant_block("b", {0, 1}, 2.0, mb)};
  const auto fused = fuse(blocks, std::vector<NoiseEstimate>{{"a", 1.0}, {"b", 1.0}});
  const auto out = redistribute(fused, blocks);
  for (const auto& b : out) {
    EXPECT_EQ(b.mask.count(), 4);
    EXPECT_DOUBLE_EQ(*b.q, 1.0);
    EXPECT_EQ(b.values(1, 1), 2.0);
    EXPECT_EQ(b.values(0, 0), 1.0);
  }
}

TEST(Aggregate, Idempotent) {
  sim::AggregationConfig cfg;
  CounterRng rng(8);
  const Matrix x = rng.gaussian_matrix(30, 2) * 2;
  Matrix p = x * x.transpose();
  std::vector<ObservedBlock> blocks;
  for (int k = 0; k < 2; ++k) {
    Matrix v = p.topLeftCorner(20, 20);
    for (Index j = 0; j < 20; ++j)
      for (Index i = 0; i <= j; ++i) {
        const double e = (k + 1) * 0.3 * rng.normal();
        v(i, j) += e;
        if (i != j) v(j, i) += e;
      }
    blocks.push_back(make_observed_block("s" + std::to_string(k), EntityIndexSet::range(k * 5, 20),
                                         v.topLeftCorner(20, 20)));
  }
  const auto once = aggregate(blocks, 2);
  const auto twice = aggregate(once, 2);
  for (std::size_t k = 0; k < once.size(); ++k) EXPECT_LT(max_abs(once[k].values - twice[k].values), 1e-10);
}

TEST(Aggregate, FusedVarianceNearTheInverseVarianceOptimum) {
  // Two sources observe one entry with known noise; weights from the known
  // variances reach the optimum (sum sigma^-2)^-1.
  CounterRng rng(9);
  const double s1 = 0.2, s2 = 1.0, truth = 3.0;
  const std::vector<double> s2v{s1 * s1, s2 * s2};
  const Vector w = fusion_weights(s2v);
  double ss = 0.0;
  const int reps = 10000;
  for (int k = 0; k < reps; ++k) {
    const double fused = w[0] * (truth + s1 * rng.normal()) + w[1] * (truth + s2 * rng.normal());
    ss += (fused - truth) * (fused - truth);
  }
  EXPECT_LE(ss / reps, 1.05 / (1 / (s1 * s1) + 1 / (s2 * s2)));
}

TEST(Aggregate, NonSymmetricBlocksAreRejectedForNoiseEstimation) {
  const auto b = make_observed_block("r", EntityIndexSet::range(0, 2), EntityIndexSet::range(5, 2),
                                     Matrix::Ones(2, 2), Mask::Constant(2, 2, true));
  EXPECT_THROW(estimate_noise(b, 1), DataError);
}
