#pragma once

// Influence of a data point on an M-estimator, the effective dimension,
// condition numbers and the statistical error bounds built from them.

#include <cmath>
#include <string>

#include "inflab/glm.hpp"
#include "inflab/ihvp.hpp"
#include "inflab/linalg.hpp"
#include "inflab/mestim.hpp"

namespace inflab {

template <typename Scalar>
struct InfluenceReport {
  DataPoint<Scalar> point;
  Vector<Scalar> influence;  // -(H + damping I)^{-1} grad l(z, theta)
  IhvpSolution<Scalar> solution;
  Scalar damping = Scalar(0);
};

/// I_n(z) with the empirical Hessian at theta, solved by cfg.method.
template <typename Scalar>
InfluenceReport<Scalar> influence_empirical(const LossModel<Scalar>& model,
                                            const Dataset<Scalar>& data,
                                            const Vector<Scalar>& theta, const DataPoint<Scalar>& z,
                                            const SolverConfig<Scalar>& cfg,
                                            Scalar damping = Scalar(0)) {
  const GlmHvpOracle<Scalar> oracle(model, data, theta, damping);
  InfluenceReport<Scalar> report;
  report.point = z;
  report.damping = damping;
  report.solution = solve(oracle, grad(model, z, theta), cfg);
  report.influence = report.solution.u;
  return report;
}

/// Stand-in for population quantities: a reference sample much larger than
/// any subsample it is compared with.
template <typename Scalar>
struct PopulationProxy {
  LossModel<Scalar> model;
  Dataset<Scalar> data;
  FitResult<Scalar> fit;
  SymMatrix<Scalar> hessian;        // H at the proxy minimizer
  SymMatrix<Scalar> gradient_cov;   // G at the proxy minimizer

  Index size() const { return data.size(); }
};

template <typename Scalar>
SymMatrix<Scalar> gradient_covariance(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                                      const Vector<Scalar>& theta);

template <typename Scalar>
PopulationProxy<Scalar> make_population_proxy(const LossModel<Scalar>& model, Dataset<Scalar> data,
                                              const FitOptions<Scalar>& opts = {}) {
  auto result = fit(model, data, Vector<Scalar>(Vector<Scalar>::Zero(model.param_dim())), opts);
  auto h = batch_hessian(model, data, result.theta);
  auto g = gradient_covariance(model, data, result.theta);
  return PopulationProxy<Scalar>{model, std::move(data), std::move(result), std::move(h), std::move(g)};
}

template <typename Scalar>
InfluenceReport<Scalar> influence_population(const PopulationProxy<Scalar>& proxy,
                                             const DataPoint<Scalar>& z,
                                             const SolverConfig<Scalar>& cfg) {
  return influence_empirical(proxy.model, proxy.data, proxy.fit.theta, z, cfg);
}

/// <grad h(theta), I(z)> with h the loss at z_test.
template <typename Scalar>
Scalar prediction_influence(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                            const Vector<Scalar>& theta, const DataPoint<Scalar>& z,
                            const DataPoint<Scalar>& z_test, const SolverConfig<Scalar>& cfg,
                            Scalar damping = Scalar(0)) {
  const auto report = influence_empirical(model, data, theta, z, cfg, damping);
  return dot(grad(model, z_test, theta), report.influence);
}

/// Tr(H^{-1} G), by one Cholesky factorization and p solves.
template <typename Scalar>
Scalar effective_dimension(const SymMatrix<Scalar>& h, const SymMatrix<Scalar>& g) {
  if (h.dim() != g.dim()) fail(ErrorCode::DimensionMismatch, "effective_dimension");
  const Cholesky<Scalar> chol(h);
  const Matrix<Scalar> gd = g.dense();
  Scalar acc(0);
  for (Index j = 0; j < h.dim(); ++j) acc += chol.solve(Vector<Scalar>(gd.col(j)))(j);
  return acc;
}

/// (1/n) sum g_i g_i^T - gbar gbar^T over per-point gradients.
template <typename Scalar>
SymMatrix<Scalar> gradient_covariance(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                                      const Vector<Scalar>& theta) {
  if (data.size() < 2) fail(ErrorCode::EmptyDataset, "gradient_covariance needs at least two points");
  const Index p = model.param_dim();
  const Scalar w = Scalar(1) / Scalar(data.size());
  Vector<Scalar> mean = Vector<Scalar>::Zero(p);
  std::vector<Vector<Scalar>> grads;
  grads.reserve(static_cast<std::size_t>(data.size()));
  for (Index i = 0; i < data.size(); ++i) {
    grads.push_back(grad(model, data.x(i), data.y(i), theta));
    mean += grads.back();
  }
  mean *= w;
  // Centered form: equal to the raw second moment minus the outer mean, without cancellation.
  SymMatrix<Scalar> cov(p);
  for (const auto& g : grads) cov.add_rank_one(w, Vector<Scalar>(g - mean));
  return cov;
}

template <typename Scalar>
struct ConditionNumbers {
  Scalar kappa;   // L / mu
  Scalar mu;      // smallest eigenvalue of H
  Scalar log_k;   // log of (Tr H / p)^p / det H
};

template <typename Scalar>
ConditionNumbers<Scalar> condition_numbers(const SymMatrix<Scalar>& h, Scalar smoothness) {
  using std::log;
  const auto eig = sym_eigen(h);
  const Index p = h.dim();
  const Scalar mu = eig.eigenvalues(p - 1);
  if (!(mu > Scalar(0))) {
    fail(ErrorCode::NotPositiveDefinite,
         "condition_numbers: smallest eigenvalue " + std::to_string(static_cast<double>(mu)));
  }
  Scalar log_det(0);
  for (Index i = 0; i < p; ++i) log_det += log(eig.eigenvalues(i));
  return {smoothness / mu, mu, Scalar(p) * log(h.trace() / Scalar(p)) - log_det};
}

template <typename Scalar>
ConditionNumbers<Scalar> condition_numbers(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                                           const Vector<Scalar>& theta) {
  return condition_numbers(batch_hessian(model, data, theta), smoothness_L(model, data));
}

/// Inputs of the statistical bounds. The absolute constant defaults to 1;
/// K1, K2 and sigma_h are carried along but do not enter the evaluation.
struct BoundParams {
  double r = 1.0;        // self-concordance parameter R
  double mu_star = 1.0;  // smallest eigenvalue of the population Hessian
  double p_star = 1.0;   // effective dimension
  double p = 1.0;        // ambient dimension
  double delta = 0.05;   // failure probability
  double c = 1.0;
  double k1 = 0.0, k2 = 0.0, sigma_h = 0.0;
};

struct StatisticalBound {
  double value;
  double sample_threshold;  // n above which the bound is claimed to hold
  bool vanishing_r;         // R = 0: the expression is identically 0 (least squares)
};

inline void check_bound_params(const BoundParams& bp) {
  if (!(bp.delta > 0.0 && bp.delta < 1.0)) fail(ErrorCode::InvalidArgument, "delta must lie in (0, 1)");
  if (!(bp.mu_star > 0.0)) fail(ErrorCode::InvalidArgument, "mu_star must be positive");
}

/// C R^2 p*^2 log^3(p/delta) / (mu* n), threshold C (R^2 p*/mu* log(1/delta) + log(p/delta)).
inline StatisticalBound influence_error_bound(const BoundParams& bp, double n) {
  check_bound_params(bp);
  if (!(n >= 1.0)) fail(ErrorCode::InvalidArgument, "bound needs n >= 1");
  const double lg = std::log(bp.p / bp.delta);
  const double r2 = bp.r * bp.r;
  return {bp.c * r2 * bp.p_star * bp.p_star * lg * lg * lg / (bp.mu_star * n),
          bp.c * (r2 * bp.p_star / bp.mu_star * std::log(1.0 / bp.delta) + lg), bp.r == 0.0};
}

/// Computational plus statistical error: 8 eps + the bound above.
inline double total_error_bound(double eps_comp, const BoundParams& bp, double n) {
  if (!(eps_comp >= 0.0)) fail(ErrorCode::InvalidArgument, "eps_comp must be nonnegative");
  return 8.0 * eps_comp + influence_error_bound(bp, n).value;
}

/// ||a - b||_H^2.
template <typename Scalar>
Scalar hstar_norm_error(const Vector<Scalar>& a, const Vector<Scalar>& b, const SymMatrix<Scalar>& h) {
  if (a.size() != b.size() || a.size() != h.dim()) fail(ErrorCode::DimensionMismatch, "hstar_norm_error");
  const Vector<Scalar> d = a - b;
  const Scalar e = weighted_norm(d, h);
  return e * e;
}

}  // namespace inflab
