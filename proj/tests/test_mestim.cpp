#include <gtest/gtest.h>

#include <cmath>

#include "inflab/mestim.hpp"
#include "test_util.hpp"

using namespace inflab;
using inflab::testing::random_glm_data;
using inflab::testing::random_vector;
using inflab::testing::zeros;

namespace {

Dataset<double> logistic_data(std::uint64_t seed, Index n, Index p) {
  rng::SplitMix64 gen(seed);
  return random_glm_data(gen, LossFamily::binary_logistic(), n, p, Vector<double>::Constant(p, 0.7));
}

}  // namespace

TEST(Fit, LeastSquaresNormalEquationsOneStep) {
  rng::SplitMix64 gen(1);
  const auto data = random_glm_data(gen, LossFamily::least_squares(), 30, 4, Vector<double>::Ones(4));
  const auto model = model_for(data, 0.0);
  const auto res = fit(model, data, zeros(4));
  const Matrix<double> x = data.feature_matrix();
  const Vector<double> ref = (x.transpose() * x).ldlt().solve(x.transpose() * data.responses());
  EXPECT_LE(norm(Vector<double>(res.theta - ref)), 1e-10 * norm(ref));
  EXPECT_LE(res.newton_iters, 1);
}

TEST(Fit, SinglePointLeastSquares) {
  Dataset<double>::FeatureMatrix x(1, 1);
  x(0, 0) = 1.0;
  Vector<double> y(1);
  y(0) = 2.0;
  const Dataset<double> data(x, y, LossFamily::least_squares());
  const auto res = fit(model_for(data, 0.0), data, zeros(1));
  EXPECT_NEAR(res.theta(0), 2.0, 1e-12);
}

TEST(Fit, SeparableLogisticWithRidgeConverges) {
  // y = sign(x_1): separable without the ridge term.
  rng::SplitMix64 gen(2);
  Dataset<double>::FeatureMatrix x(40, 2);
  Vector<double> y(40);
  for (Index i = 0; i < 40; ++i) {
    x(i, 0) = gen.normal();
    x(i, 1) = gen.normal();
    y(i) = x(i, 0) >= 0 ? 1.0 : -1.0;
  }
  const Dataset<double> data(x, y, LossFamily::binary_logistic());
  const auto model = model_for(data, 0.01);
  const auto res = fit(model, data, zeros(2));
  EXPECT_LE(res.grad_norm, 1e-10);
  EXPECT_LE(norm(batch_gradient(model, data, res.theta)), 1e-10);
  EXPECT_TRUE(std::isfinite(res.objective));
}

TEST(Fit, InitializationIndependent) {
  const auto data = logistic_data(3, 200, 5);
  const auto model = model_for(data, 0.01);
  rng::SplitMix64 gen(4);
  const auto a = fit(model, data, random_vector(gen, 5));
  const auto b = fit(model, data, random_vector(gen, 5, 3.0));
  EXPECT_LE((a.theta - b.theta).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Fit, ObjectiveMonotone) {
  const auto data = logistic_data(5, 300, 6);
  const auto model = model_for(data, 0.001);
  rng::SplitMix64 gen(6);
  const auto res = fit(model, data, random_vector(gen, 6, 4.0));
  ASSERT_GE(res.objective_trace.size(), 2u);
  for (std::size_t k = 1; k < res.objective_trace.size(); ++k) {
    EXPECT_LE(res.objective_trace[k], res.objective_trace[k - 1]);
  }
}

TEST(Fit, AllFamiliesReachTolerance) {
  rng::SplitMix64 gen(7);
  for (const auto& family : {LossFamily::least_squares(), LossFamily::binary_logistic(), LossFamily::poisson(),
                             LossFamily::multiclass(3)}) {
    const auto data = random_glm_data(gen, family, 150, 3, Vector<double>::Constant(3, 0.3));
    const auto model = model_for(data, 0.01);
    const auto res = fit(model, data, zeros(model.param_dim()));
    EXPECT_LE(res.grad_norm, 1e-10) << to_string(family);
  }
}

TEST(Fit, MaxIterationsReported) {
  const auto data = logistic_data(8, 100, 3);
  FitOptions<double> opts;
  opts.max_iters = 1;
  opts.tol = 1e-14;
  try {
    fit(model_for(data, 0.01), data, Vector<double>(Vector<double>::Constant(3, 5.0)), opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MaxIterations);
  }
}

TEST(FitWeighted, UniformWeightsBitwiseEqualFit) {
  const auto data = logistic_data(9, 120, 4);
  const auto model = model_for(data, 0.01);
  const Vector<double> theta0 = zeros(4);
  const auto a = fit(model, data, theta0);
  const auto b = fit_weighted(model, data, Vector<double>(Vector<double>::Constant(120, 1.0 / 120)), theta0);
  EXPECT_EQ(a.theta, b.theta);
}

TEST(FitWeighted, ZeroWeightDropsPoint) {
  const auto data = logistic_data(10, 60, 3);
  const auto model = model_for(data, 0.01);
  Vector<double> w = Vector<double>::Constant(60, 1.0 / 59);
  w(17) = 0.0;
  const auto a = fit_weighted(model, data, w, zeros(3));
  const auto b = fit(model, data.without(17), zeros(3));
  EXPECT_LE((a.theta - b.theta).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitWeighted, SinglePointMinimizer) {
  rng::SplitMix64 gen(11);
  const auto data = random_glm_data(gen, LossFamily::least_squares(), 5, 1, Vector<double>::Ones(1));
  Vector<double> w = zeros(5);
  w(2) = 1.0;
  const auto res = fit_weighted(model_for(data, 0.0), data, w, zeros(1));
  EXPECT_NEAR(res.theta(0), data.y(2) / data.x(2)(0), 1e-10);
}

TEST(FitWeighted, RejectsAllZero) {
  const auto data = logistic_data(12, 10, 2);
  try {
    fit_weighted(model_for(data, 0.01), data, zeros(10), zeros(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllZeroWeights);
  }
}

TEST(FitPerturbed, ZeroEpsilonIsFit) {
  const auto data = logistic_data(13, 80, 3);
  const auto model = model_for(data, 0.01);
  const auto a = fit(model, data, zeros(3));
  const auto b = fit_perturbed(model, data, data.point(0), 0.0, zeros(3));
  EXPECT_EQ(a.theta, b.theta);
}

TEST(FitPerturbed, ExistingPointIsReweighting) {
  const auto data = logistic_data(14, 50, 3);
  const auto model = model_for(data, 0.01);
  const double eps = 1.0 / 50;
  const auto a = fit_perturbed(model, data, data.point(4), eps, zeros(3));
  Vector<double> w = Vector<double>::Constant(50, (1 - eps) / 50);
  w(4) += eps;
  const auto b = fit_weighted(model, data, w, zeros(3));
  EXPECT_LE((a.theta - b.theta).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitPerturbed, RejectsEpsilonOne) {
  const auto data = logistic_data(15, 10, 2);
  EXPECT_THROW(fit_perturbed(model_for(data, 0.01), data, data.point(0), 1.0, zeros(2)), Error);
}

TEST(BatchHessian, LeastSquaresGram) {
  rng::SplitMix64 gen(16);
  const auto data = random_glm_data(gen, LossFamily::least_squares(), 25, 3, Vector<double>::Ones(3));
  const auto model = model_for(data, 0.2);
  const Matrix<double> x = data.feature_matrix();
  const Matrix<double> ref = x.transpose() * x / 25.0 + 0.2 * Matrix<double>::Identity(3, 3);
  for (int k = 0; k < 3; ++k) {
    const auto h = batch_hessian(model, data, random_vector(gen, 3));
    EXPECT_LE(inflab::testing::max_abs(h.dense() - ref), 1e-13);
  }
}

TEST(BatchHessian, LogisticAtZeroIsQuarterGram) {
  const auto data = logistic_data(17, 30, 4);
  const auto model = model_for(data, 0.01);
  const Matrix<double> x = data.feature_matrix();
  const Matrix<double> ref = x.transpose() * x / 120.0 + 0.01 * Matrix<double>::Identity(4, 4);
  EXPECT_LE(inflab::testing::max_abs(batch_hessian(model, data, zeros(4)).dense() - ref), 1e-13);
}

TEST(BatchHessian, ColumnsFromAveragedHessVec) {
  rng::SplitMix64 gen(18);
  const auto data = random_glm_data(gen, LossFamily::multiclass(3), 20, 3, zeros(3));
  const auto model = model_for(data, 0.05);
  const Vector<double> th = random_vector(gen, model.param_dim());
  const auto h = batch_hessian(model, data, th);
  for (Index j = 0; j < model.param_dim(); ++j) {
    Vector<double> col = zeros(model.param_dim());
    for (Index i = 0; i < data.size(); ++i) {
      col += hess_vec(model, data.point(i), th, Vector<double>::Unit(model.param_dim(), j)) / 20.0;
    }
    EXPECT_LE((h.dense().col(j) - col).cwiseAbs().maxCoeff(), 1e-13);
  }
}
