#include <gtest/gtest.h>

#include <cmath>

#include "inflab/influence.hpp"
#include "test_util.hpp"

using namespace inflab;
using inflab::testing::random_glm_data;
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

Dataset<double> logistic(std::uint64_t seed, Index n, Index p) {
  rng::SplitMix64 gen(seed);
  return random_glm_data(gen, LossFamily::binary_logistic(), n, p, Vector<double>::Constant(p, 0.5));
}

}  // namespace

TEST(InfluenceEmpirical, UnitHessianLeastSquares) {
  // (1/4) sum x x^T = I for rows +-sqrt2 e_j.
  const double s = std::sqrt(2.0);
  Dataset<double>::FeatureMatrix x(4, 2);
  x << s, 0, 0, s, -s, 0, 0, -s;
  const Dataset<double> data(x, vec({1, 2, 0.5, -1}), LossFamily::least_squares());
  const auto model = model_for(data, 0.0);
  const Vector<double> theta = fit(model, data, zeros(2)).theta;
  const DataPoint<double> z{vec({0.3, -1.2}), 2.0};
  const auto report = influence_empirical(model, data, theta, z, exact_cfg());
  const Vector<double> expected = (z.y - dot(theta, z.x)) * z.x;
  EXPECT_LE((report.influence - expected).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(InfluenceEmpirical, ExactAndCgAgree) {
  const auto data = logistic(1, 300, 6);
  const auto model = model_for(data, 0.01);
  const Vector<double> theta = fit(model, data, zeros(6)).theta;
  const auto z = data.point(7);
  const auto a = influence_empirical(model, data, theta, z, exact_cfg());
  SolverConfig<double> cg;
  cg.method = IhvpMethod::CG;
  const auto b = influence_empirical(model, data, theta, z, cg);
  const auto h = batch_hessian(model, data, theta);
  EXPECT_LE(std::sqrt(hstar_norm_error(a.influence, b.influence, h)), 1e-7);
}

TEST(InfluenceEmpirical, PerfectlyFitPointHasNoInfluence) {
  rng::SplitMix64 gen(2);
  const auto data = random_glm_data(gen, LossFamily::least_squares(), 30, 3, Vector<double>::Ones(3));
  const auto model = model_for(data, 0.0);
  const Vector<double> theta = fit(model, data, zeros(3)).theta;
  const Vector<double> x = random_vector(gen, 3);
  const auto report = influence_empirical(model, data, theta, DataPoint<double>{x, dot(theta, x)}, exact_cfg());
  EXPECT_LE(norm(report.influence), 1e-14);
}

TEST(InfluenceEmpirical, FiniteDifferenceRatio) {
  for (std::uint64_t seed = 10; seed < 14; ++seed) {
    const auto data = logistic(seed, 150, 4);
    const auto model = model_for(data, 0.01);
    const Vector<double> theta = fit(model, data, zeros(4), FitOptions<double>{1e-14}).theta;
    const auto z = data.point(3);
    const Vector<double> infl = influence_empirical(model, data, theta, z, exact_cfg()).influence;
    std::vector<double> errs;
    for (const double eps : {1e-3, 5e-4, 2.5e-4}) {
      const auto pert = fit_perturbed(model, data, z, eps, theta, FitOptions<double>{1e-14});
      errs.push_back(norm(Vector<double>((pert.theta - theta) / eps - infl)));
    }
    for (std::size_t k = 1; k < errs.size(); ++k) {
      const double ratio = errs[k - 1] / errs[k];
      EXPECT_GE(ratio, 1.5) << "seed " << seed;
      EXPECT_LE(ratio, 2.5) << "seed " << seed;
    }
  }
}

TEST(InfluencePopulation, UsesProxyFit) {
  const auto data = logistic(3, 2000, 3);
  const auto model = model_for(data, 0.01);
  const auto proxy = make_population_proxy(model, data);
  EXPECT_EQ(proxy.size(), 2000);
  EXPECT_LE(proxy.fit.grad_norm, 1e-10);
  const auto z = data.point(0);
  const auto a = influence_population(proxy, z, exact_cfg());
  const Vector<double> ref = -cholesky_solve(proxy.hessian, grad(model, z, proxy.fit.theta));
  EXPECT_LE(norm(Vector<double>(a.influence - ref)), 1e-12 * norm(ref));
}

TEST(PredictionInfluence, SelfInfluenceIsNegative) {
  rng::SplitMix64 gen(4);
  const auto data = random_glm_data(gen, LossFamily::least_squares(), 40, 3, Vector<double>::Ones(3));
  const auto model = model_for(data, 0.0);
  const Vector<double> theta = fit(model, data, zeros(3)).theta;
  for (Index i = 0; i < 5; ++i) {
    const auto z = data.point(i);
    EXPECT_LT(prediction_influence(model, data, theta, z, z, exact_cfg()), 0.0);
  }
}

TEST(PredictionInfluence, FlatTestFunctionGivesZero) {
  rng::SplitMix64 gen(5);
  const auto data = random_glm_data(gen, LossFamily::least_squares(), 20, 2, Vector<double>::Ones(2));
  const auto model = model_for(data, 0.0);
  const Vector<double> theta = fit(model, data, zeros(2)).theta;
  const Vector<double> x = random_vector(gen, 2);
  const DataPoint<double> flat{x, dot(theta, x)};
  EXPECT_NEAR(prediction_influence(model, data, theta, data.point(0), flat, exact_cfg()), 0.0, 1e-14);
}

TEST(PredictionInfluence, MatchesChainRuleDifference) {
  const auto data = logistic(6, 200, 4);
  const auto model = model_for(data, 0.01);
  const FitOptions<double> tight{1e-14};
  const Vector<double> theta = fit(model, data, zeros(4), tight).theta;
  const auto z = data.point(11), z_test = data.point(42);
  const double g = prediction_influence(model, data, theta, z, z_test, exact_cfg());
  const double eps = 1e-5;
  const auto plus = fit_perturbed(model, data, z, eps, theta, tight);
  const double fd = (loss(model, z_test, plus.theta) - loss(model, z_test, theta)) / eps;
  EXPECT_NEAR(fd, g, 1e-3 * (1 + std::abs(g)));
}

TEST(EffectiveDimension, EqualMatricesGiveAmbientDimension) {
  rng::SplitMix64 gen(7);
  const auto h = inflab::testing::random_spd(gen, 9, 50.0);
  EXPECT_NEAR(effective_dimension(h, h), 9.0, 1e-10);
}

TEST(EffectiveDimension, ZeroCovariance) {
  rng::SplitMix64 gen(8);
  EXPECT_EQ(effective_dimension(inflab::testing::random_spd(gen, 4), SymMatrix<double>(4)), 0.0);
}

TEST(EffectiveDimension, SharedEigenvectorsSumRatios) {
  rng::SplitMix64 gen(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Index p = 12;
    const Matrix<double> q = inflab::testing::random_orthogonal(gen, p);
    Vector<double> lh(p), lg(p);
    for (Index i = 0; i < p; ++i) {
      lh(i) = 0.1 + gen.uniform();
      lg(i) = gen.uniform();
    }
    const auto h = SymMatrix<double>::symmetrized(q * lh.asDiagonal() * q.transpose());
    const auto g = SymMatrix<double>::symmetrized(q * lg.asDiagonal() * q.transpose());
    EXPECT_NEAR(effective_dimension(h, g), lg.cwiseQuotient(lh).sum(), 1e-10);
  }
}

TEST(EffectiveDimension, RejectsIndefiniteHessian) {
  EXPECT_THROW(effective_dimension(SymMatrix<double>::diagonal(vec({1, -1})), SymMatrix<double>(2)), Error);
}

TEST(GradientCovariance, IdenticalPointsGiveZero) {
  // Four copies so the mean is exact in floating point.
  Dataset<double>::FeatureMatrix x(4, 2);
  x << 1, 2, 1, 2, 1, 2, 1, 2;
  const Dataset<double> data(x, vec({1, 1, 1, 1}), LossFamily::least_squares());
  EXPECT_EQ(gradient_covariance(model_for(data, 0.0), data, vec({0.2, 0.1})).max_abs(), 0.0);
}

TEST(GradientCovariance, OppositeGradients) {
  Dataset<double>::FeatureMatrix x(2, 2);
  x << 1, 2, 1, 2;
  const Dataset<double> data(x, vec({3, -3}), LossFamily::least_squares());
  // gradients -+3 (1, 2) at theta = 0: covariance 9 x x^T
  const auto cov = gradient_covariance(model_for(data, 0.0), data, zeros(2));
  const Matrix<double> ref = 9.0 * vec({1, 2}) * vec({1, 2}).transpose();
  EXPECT_LE(inflab::testing::max_abs(cov.dense() - ref), 1e-13);
}

TEST(GradientCovariance, PositiveSemidefinite) {
  const auto data = logistic(10, 100, 5);
  const auto model = model_for(data, 0.01);
  const auto cov = gradient_covariance(model, data, Vector<double>(Vector<double>::Constant(5, 0.3)));
  EXPECT_GE(sym_eigen(cov).eigenvalues(4), -1e-12);
}

TEST(GradientCovariance, NeedsTwoPoints) {
  const auto data = logistic(11, 1, 2);
  EXPECT_THROW(gradient_covariance(model_for(data, 0.0), data, zeros(2)), Error);
}

TEST(ConditionNumbers, Identity) {
  const auto c = condition_numbers(SymMatrix<double>::identity(5), 3.0);
  EXPECT_DOUBLE_EQ(c.kappa, 3.0);
  EXPECT_DOUBLE_EQ(c.mu, 1.0);
  EXPECT_NEAR(c.log_k, 0.0, 1e-15);
}

TEST(ConditionNumbers, TwoByTwo) {
  const auto c = condition_numbers(SymMatrix<double>::diagonal(vec({4, 1})), 4.0);
  EXPECT_DOUBLE_EQ(c.kappa, 4.0);
  EXPECT_NEAR(c.log_k, 2 * std::log(2.5) - std::log(4.0), 1e-14);
}

TEST(ConditionNumbers, EmpiricalAgainstPopulation) {
  // Large-sample sanity check: kappa_n <= 4 kappa_*.
  const auto pop = logistic(12, 20000, 4);
  const auto model = model_for(pop, 0.01);
  const Vector<double> theta_pop = fit(model, pop, zeros(4)).theta;
  const double kappa_star = condition_numbers(model, pop, theta_pop).kappa;
  const auto sample = pop.prefix(500);
  const Vector<double> theta_n = fit(model, sample, zeros(4)).theta;
  const auto c = condition_numbers(batch_hessian(model, sample, theta_n), smoothness_L(model, pop));
  EXPECT_LE(c.kappa, 4 * kappa_star);
}

TEST(InfluenceErrorBound, FormulaPlugIn) {
  BoundParams bp;
  bp.p_star = 9;
  bp.p = 9;
  const auto b = influence_error_bound(bp, 100);
  EXPECT_NEAR(b.value, 81 * std::pow(std::log(180.0), 3) / 100, 1e-10);
  EXPECT_NEAR(b.sample_threshold, 9 * std::log(20.0) + std::log(180.0), 1e-12);
}

TEST(InfluenceErrorBound, InverseInSampleSize) {
  BoundParams bp;
  bp.p_star = 3;
  bp.p = 5;
  EXPECT_NEAR(influence_error_bound(bp, 200).value * 2, influence_error_bound(bp, 100).value, 1e-12);
}

TEST(InfluenceErrorBound, VanishingSelfConcordance) {
  BoundParams bp;
  bp.r = 0;
  const auto b = influence_error_bound(bp, 10);
  EXPECT_EQ(b.value, 0.0);
  EXPECT_TRUE(b.vanishing_r);
}

TEST(InfluenceErrorBound, Monotone) {
  BoundParams bp;
  bp.p = 10;
  bp.p_star = 4;
  const double base = influence_error_bound(bp, 50).value;
  EXPECT_LT(influence_error_bound(bp, 51).value, base);
  auto more = bp;
  more.p_star = 5;
  EXPECT_GT(influence_error_bound(more, 50).value, base);
  more = bp;
  more.r = 1.5;
  EXPECT_GT(influence_error_bound(more, 50).value, base);
  more = bp;
  more.delta = 0.01;
  EXPECT_GT(influence_error_bound(more, 50).value, base);
}

TEST(InfluenceErrorBound, RejectsBadParams) {
  BoundParams bp;
  bp.delta = 1.0;
  EXPECT_THROW(influence_error_bound(bp, 10), Error);
  bp.delta = 0.1;
  bp.mu_star = 0;
  EXPECT_THROW(influence_error_bound(bp, 10), Error);
}

TEST(TotalErrorBound, Combinations) {
  BoundParams bp;
  bp.p_star = 2;
  bp.p = 3;
  const double stat = influence_error_bound(bp, 40).value;
  EXPECT_EQ(total_error_bound(0.0, bp, 40), stat);
  bp.c = 0.05 / stat;
  EXPECT_NEAR(total_error_bound(0.01, bp, 40), 0.13, 1e-15);
  bp.r = 0;
  EXPECT_EQ(total_error_bound(0.25, bp, 40), 2.0);
}

TEST(HstarNorm, Basics) {
  const Vector<double> a = vec({1, 2, 3});
  EXPECT_EQ(hstar_norm_error(a, a, SymMatrix<double>::identity(3)), 0.0);
  EXPECT_DOUBLE_EQ(hstar_norm_error(a, vec({0, 0, 1}), SymMatrix<double>::identity(3)), 9.0);
  EXPECT_THROW(hstar_norm_error(a, vec({1, 2}), SymMatrix<double>::identity(3)), Error);
}

TEST(HstarNorm, AffineInvariance) {
  // x -> A^{-T} x maps theta -> A theta, I -> A I and H -> A^{-T} H A^{-1}.
  const auto data = logistic(13, 4000, 3);
  const auto model = model_for(data, 0.0);
  const auto sample = data.prefix(300);
  rng::SplitMix64 gen(14);
  const Matrix<double> a = inflab::testing::random_matrix(gen, 3, 3) + 2 * Matrix<double>::Identity(3, 3);
  const Matrix<double> a_inv_t = a.inverse().transpose();
  const auto transform = [&](const Dataset<double>& d) {
    Dataset<double>::FeatureMatrix x = d.feature_matrix() * a_inv_t.transpose();
    return Dataset<double>(std::move(x), d.responses(), d.family());
  };
  const auto error = [&](const Dataset<double>& pop, const Dataset<double>& smp, const DataPoint<double>& z) {
    const FitOptions<double> tight{1e-13};
    const auto proxy = make_population_proxy(model, pop, tight);
    const Vector<double> theta_n = fit(model, smp, zeros(3), tight).theta;
    const auto in = influence_empirical(model, smp, theta_n, z, exact_cfg()).influence;
    const auto ip = influence_population(proxy, z, exact_cfg()).influence;
    return hstar_norm_error(in, ip, proxy.hessian);
  };
  const DataPoint<double> z{vec({1, -1, 0.5}), 1.0};
  const double base = error(data, sample, z);
  const DataPoint<double> z2{a_inv_t * z.x, z.y};
  EXPECT_NEAR(error(transform(data), transform(sample), z2), base, 1e-6 * base);
}
