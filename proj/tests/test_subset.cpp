#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "inflab/subset.hpp"
#include "test_util.hpp"

using namespace inflab;
using inflab::testing::random_vector;
using inflab::testing::zeros;

namespace {

Vector<double> vec(std::initializer_list<double> xs) {
  Vector<double> v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (const double x : xs) v(i++) = x;
  return v;
}

SolverConfig<double> exact_cfg() {
  SolverConfig<double> cfg;
  cfg.method = IhvpMethod::Exact;
  return cfg;
}

/// Largest sum of n - m kept entries over all removal patterns of size m.
double brute_best_kept_sum(const Vector<double>& v, Index m) {
  const Index n = v.size();
  std::vector<bool> mask(static_cast<std::size_t>(n), false);
  std::fill(mask.begin(), mask.begin() + m, true);
  double best = -std::numeric_limits<double>::infinity();
  do {
    double kept = 0.0;
    for (Index i = 0; i < n; ++i)
      if (!mask[static_cast<std::size_t>(i)]) kept += v(i);
    best = std::max(best, kept);
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return best;
}

}  // namespace

TEST(Superquantile, TopHalfMean) { EXPECT_DOUBLE_EQ(superquantile(vec({1, 2, 3, 4}), 0.5), 3.5); }

TEST(Superquantile, ConstantVector) {
  for (const double a : {0.0, 0.1, 0.37, 0.9}) EXPECT_DOUBLE_EQ(superquantile(Vector<double>(Vector<double>::Constant(7, 2.5)), a), 2.5);
}

TEST(Superquantile, ZeroLevelIsMean) {
  rng::SplitMix64 gen(1);
  const Vector<double> v = random_vector(gen, 13);
  EXPECT_NEAR(superquantile(v, 0.0), v.mean(), 1e-14);
}

TEST(Superquantile, FractionalLevel) {
  // alpha n = 1.5 on (1, 2, 3, 4): drop 1, keep half of 2's weight:
  // (0.5 * 2 + 3 + 4) / 2.5
  EXPECT_NEAR(superquantile(vec({4, 2, 1, 3}), 0.375), 8.0 / 2.5, 1e-15);
}

TEST(Superquantile, EmptyInput) {
  try {
    superquantile(Vector<double>(0), 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
  EXPECT_THROW(superquantile(vec({1}), 1.0), Error);
}

TEST(SuperquantileDual, BreakpointTieRule) {
  const auto d = superquantile_dual(vec({1, 2, 3, 4}), 0.5);
  EXPECT_DOUBLE_EQ(d.value, 3.5);
  EXPECT_EQ(d.eta, 2.0);
}

TEST(SuperquantileDual, ConstantVector) {
  const auto d = superquantile_dual(Vector<double>(Vector<double>::Constant(5, -1.25)), 0.4);
  EXPECT_EQ(d.value, -1.25);
  EXPECT_EQ(d.eta, -1.25);
}

TEST(SuperquantileDual, MatchesPrimalIncludingFractionalLevels) {
  rng::SplitMix64 gen(2);
  for (int trial = 0; trial < 500; ++trial) {
    const Index n = 1 + static_cast<Index>(gen.uniform_index(40));
    const double alpha = 0.95 * gen.uniform();
    const Vector<double> v = random_vector(gen, n, 3.0);
    EXPECT_NEAR(superquantile_dual(v, alpha).value, superquantile(v, alpha), 1e-10);
  }
}

TEST(Superquantile, ThreeFormsAgreeAtIntegerLevels) {
  rng::SplitMix64 gen(3);
  for (int trial = 0; trial < 500; ++trial) {
    const Index n = 2 + static_cast<Index>(gen.uniform_index(60));
    const Index m = static_cast<Index>(gen.uniform_index(static_cast<std::uint64_t>(n)));
    const double alpha = static_cast<double>(m) / static_cast<double>(n);
    const Vector<double> v = random_vector(gen, n);
    const double primal = superquantile(v, alpha);
    EXPECT_NEAR(superquantile_dual(v, alpha).value, primal, 1e-10);
    EXPECT_NEAR(most_influential_subset(v, alpha).greedy_value, primal, 1e-10);
  }
}

TEST(Superquantile, MonotoneInLevelAndAboveMean) {
  rng::SplitMix64 gen(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector<double> v = random_vector(gen, 25);
    double prev = superquantile(v, 0.0);
    EXPECT_NEAR(prev, v.mean(), 1e-14);
    for (double a = 0.02; a < 0.99; a += 0.02) {
      const double s = superquantile(v, a);
      EXPECT_GE(s, prev - 1e-12);
      EXPECT_GE(s, v.mean() - 1e-12);
      prev = s;
    }
  }
}

TEST(Superquantile, TranslationScaleEquivariance) {
  rng::SplitMix64 gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector<double> v = random_vector(gen, 17);
    const double a = 3 * gen.uniform(), b = gen.normal(), alpha = 0.9 * gen.uniform();
    const Vector<double> w = (a * v).array() + b;
    EXPECT_NEAR(superquantile(w, alpha), a * superquantile(v, alpha) + b, 1e-12 * (1 + std::abs(b) + a));
  }
}

TEST(MostInfluentialSubset, SmallExample) {
  const auto r = most_influential_subset(vec({5, 1, 3, 2}), 0.5);
  EXPECT_EQ(r.removed_indices, (std::vector<Index>{1, 3}));
  EXPECT_DOUBLE_EQ(r.sif_value, 4.0);
  EXPECT_DOUBLE_EQ(r.greedy_value, 4.0);
  EXPECT_FALSE(r.fractional.has_value());
}

TEST(MostInfluentialSubset, ZeroLevelRemovesNothing) {
  const auto r = most_influential_subset(vec({5, 1, 3, 2}), 0.0);
  EXPECT_TRUE(r.removed_indices.empty());
  EXPECT_DOUBLE_EQ(r.sif_value, 2.75);
}

TEST(MostInfluentialSubset, TiesRemoveLowerIndexFirst) {
  const auto r = most_influential_subset(vec({2, 1, 1, 1, 3}), 0.4);
  EXPECT_EQ(r.removed_indices, (std::vector<Index>{1, 2}));
}

TEST(MostInfluentialSubset, FractionalWeightReported) {
  const auto r = most_influential_subset(vec({4, 2, 1, 3}), 0.375);
  EXPECT_EQ(r.removed_indices, (std::vector<Index>{2}));
  ASSERT_TRUE(r.fractional.has_value());
  EXPECT_EQ(r.fractional->index, 1);
  EXPECT_DOUBLE_EQ(r.fractional->kept, 0.5);
  EXPECT_NEAR(r.greedy_value, r.sif_value, 1e-15);
}

TEST(MostInfluentialSubset, BruteForceOverRemovalPatterns) {
  rng::SplitMix64 gen(6);
  for (int trial = 0; trial < 300; ++trial) {
    const Index n = 1 + static_cast<Index>(gen.uniform_index(12));
    const Index m = static_cast<Index>(gen.uniform_index(static_cast<std::uint64_t>(n)));
    // Integer scores keep every kept-sum exact.
    Vector<double> v(n);
    for (Index i = 0; i < n; ++i) v(i) = static_cast<double>(static_cast<int>(gen.uniform_index(21)) - 10);
    const auto r = most_influential_subset(v, static_cast<double>(m) / static_cast<double>(n));
    ASSERT_EQ(static_cast<Index>(r.removed_indices.size()), m);
    double kept = v.sum();
    for (const Index i : r.removed_indices) kept -= v(i);
    EXPECT_EQ(kept, brute_best_kept_sum(v, m));
    EXPECT_NEAR(r.greedy_value, kept / static_cast<double>(n - m), 1e-12);
  }
}

TEST(MostInfluentialSubset, RemovedSetInvariantUnderRescaling) {
  rng::SplitMix64 gen(7);
  const Vector<double> v = random_vector(gen, 30);
  const auto a = most_influential_subset(v, 0.2);
  const auto b = most_influential_subset(Vector<double>(3.7 * v), 0.2);
  EXPECT_EQ(a.removed_indices, b.removed_indices);
}

namespace {

struct Fitted {
  Dataset<double> data;
  LossModel<double> model;
  Vector<double> theta;
};

Fitted least_squares(std::uint64_t seed, Index n, Index p) {
  rng::SplitMix64 gen(seed);
  auto data = inflab::testing::random_glm_data(gen, LossFamily::least_squares(), n, p, Vector<double>::Ones(p));
  auto model = model_for(data, 0.1);
  Vector<double> theta = fit(model, data, zeros(p)).theta;
  return {std::move(data), model, std::move(theta)};
}

}  // namespace

TEST(SifScores, FlatTestFunctionGivesZeros) {
  const auto f = least_squares(8, 20, 3);
  const auto s = sif_scores(f.model, f.data, f.theta, zeros(3), exact_cfg());
  EXPECT_EQ(s.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SifScores, MatchesPerPointSolves) {
  const auto f = least_squares(9, 3, 2);
  rng::SplitMix64 gen(10);
  const Vector<double> gh = random_vector(gen, 2);
  const auto scores = sif_scores(f.model, f.data, f.theta, gh, exact_cfg());
  const auto h = batch_hessian(f.model, f.data, f.theta);
  for (Index i = 0; i < 3; ++i) {
    const Vector<double> per_point = cholesky_solve(h, grad(f.model, f.data.point(i), f.theta));
    EXPECT_NEAR(scores(i), -dot(gh, per_point), 1e-13);
  }
}

TEST(SifScores, DuplicatedPointsScoreEqually) {
  Dataset<double>::FeatureMatrix x(4, 2);
  x << 1, 0.5, 1, 0.5, -0.3, 2, 0.7, -1;
  const Dataset<double> data(x, vec({1, 1, 0.2, -0.4}), LossFamily::least_squares());
  const auto model = model_for(data, 0.1);
  const Vector<double> theta = fit(model, data, zeros(2)).theta;
  const auto s = sif_scores(model, data, theta, DataPoint<double>{vec({0.2, 0.3}), 1.0}, exact_cfg());
  EXPECT_EQ(s(0), s(1));
}

TEST(SifScores, SolverAgreement) {
  const auto f = least_squares(11, 200, 5);
  rng::SplitMix64 gen(12);
  const Vector<double> gh = random_vector(gen, 5);
  SolverConfig<double> cg;
  cg.method = IhvpMethod::CG;
  const auto a = sif_scores(f.model, f.data, f.theta, gh, exact_cfg());
  const auto b = sif_scores(f.model, f.data, f.theta, gh, cg);
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SubsetInfluenceError, IdenticalAndScaled) {
  const auto f = least_squares(13, 50, 3);
  rng::SplitMix64 gen(14);
  const Vector<double> gh = random_vector(gen, 3);
  const auto emp = most_influential_subset(sif_scores(f.model, f.data, f.theta, gh, exact_cfg()), 0.1);
  EXPECT_EQ(subset_influence_error(emp, emp), 0.0);
  const auto pop = least_squares(15, 500, 3);
  const auto ref = most_influential_subset(sif_scores(pop.model, pop.data, pop.theta, gh, exact_cfg()), 0.1);
  const double base = subset_influence_error(emp, ref);
  EXPECT_GT(base, 0.0);
  const Vector<double> scaled = 3.0 * gh;
  const auto emp3 = most_influential_subset(sif_scores(f.model, f.data, f.theta, scaled, exact_cfg()), 0.1);
  const auto ref3 = most_influential_subset(sif_scores(pop.model, pop.data, pop.theta, scaled, exact_cfg()), 0.1);
  EXPECT_NEAR(subset_influence_error(emp3, ref3), 9.0 * base, 1e-9 * base);
}

TEST(SubsetErrorBound, SampleSizeRatio) {
  BoundParams bp;
  bp.p = 5;
  bp.p_star = 3;
  const double n = 1000;
  const double ratio = subset_error_bound(bp, {}, 0.1, 2 * n) / subset_error_bound(bp, {}, 0.1, n);
  EXPECT_NEAR(ratio, std::log(2 * n / 0.05) / std::log(n / 0.05) / 2, 1e-14);
}

TEST(SubsetErrorBound, LevelFactor) {
  BoundParams bp;
  bp.p = 50;
  EXPECT_NEAR(subset_error_bound(bp, {}, 0.5, 20) / subset_error_bound(bp, {}, 0.0, 20), 4.0, 1e-14);
  EXPECT_NEAR(subset_error_bound(bp, {}, 1e-9, 20), subset_error_bound(bp, {}, 0.0, 20), 1e-8);
  EXPECT_THROW(subset_error_bound(bp, {}, 1.0, 20), Error);
}
