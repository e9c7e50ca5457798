#pragma once

// Exact M-estimation by damped Newton: the empirical minimizer, its weighted
// variant, and the epsilon-contaminated variant used to check influence
// functions by finite differences.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "inflab/glm.hpp"
#include "inflab/linalg.hpp"

namespace inflab {

template <typename Scalar>
struct FitOptions {
  Scalar tol = Scalar(1e-10);  // on ||grad F||_2
  int max_iters = 200;
  int max_halvings = 60;
  Scalar armijo = Scalar(1e-4);
  Scalar fallback_damping = Scalar(1e-10);
};

template <typename Scalar>
struct FitResult {
  Vector<Scalar> theta;
  Scalar grad_norm = Scalar(0);
  int newton_iters = 0;
  Scalar objective = Scalar(0);
  std::vector<Scalar> objective_trace;  // objective after each accepted step, starting at theta0
};

/// sum_i w_i l(Z_i, theta) + sum_j c_j l(z_j, theta), ridge included per term.
template <typename Scalar>
class WeightedObjective {
 public:
  WeightedObjective(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                    Vector<Scalar> weights)
      : model_(model), data_(data), weights_(std::move(weights)) {
    if (weights_.size() != data.size()) {
      fail(ErrorCode::DimensionMismatch, "weight vector length differs from dataset size");
    }
  }

  void add_point(DataPoint<Scalar> z, Scalar weight) { extra_.emplace_back(std::move(z), weight); }

  Scalar total_weight() const {
    Scalar acc(0);
    for (Index i = 0; i < weights_.size(); ++i) acc += weights_(i);
    for (const auto& [z, c] : extra_) acc += c;
    return acc;
  }

  template <typename DT>
  Scalar value(const Eigen::MatrixBase<DT>& theta) const {
    Scalar acc(0);
    for (Index i = 0; i < data_.size(); ++i) {
      if (weights_(i) != Scalar(0)) acc += weights_(i) * data_loss(model_, data_.x(i), data_.y(i), theta);
    }
    for (const auto& [z, c] : extra_) acc += c * data_loss(model_, z.x, z.y, theta);
    return acc + total_weight() * model_.ridge / Scalar(2) * squared_norm(theta);
  }

  template <typename DT>
  Vector<Scalar> gradient(const Eigen::MatrixBase<DT>& theta) const {
    Vector<Scalar> g = Vector<Scalar>::Zero(theta.size());
    for (Index i = 0; i < data_.size(); ++i) {
      if (weights_(i) != Scalar(0))
        add_data_gradient(model_, data_.x(i), data_.y(i), theta, weights_(i), g);
    }
    for (const auto& [z, c] : extra_) add_data_gradient(model_, z.x, z.y, theta, c, g);
    g += (total_weight() * model_.ridge) * theta;
    return g;
  }

  template <typename DT>
  SymMatrix<Scalar> hessian(const Eigen::MatrixBase<DT>& theta) const {
    SymMatrix<Scalar> h(theta.size());
    for (Index i = 0; i < data_.size(); ++i) {
      if (weights_(i) != Scalar(0))
        add_data_hessian(model_, data_.x(i), data_.y(i), theta, weights_(i), h);
    }
    for (const auto& [z, c] : extra_) add_data_hessian(model_, z.x, z.y, theta, c, h);
    h.add_diagonal(total_weight() * model_.ridge);
    return h;
  }

 private:
  const LossModel<Scalar>& model_;
  const Dataset<Scalar>& data_;
  Vector<Scalar> weights_;
  std::vector<std::pair<DataPoint<Scalar>, Scalar>> extra_;
};

/// Newton's method with Armijo backtracking on an arbitrary weighted objective.
template <typename Scalar>
FitResult<Scalar> newton_minimize(const WeightedObjective<Scalar>& objective,
                                  const Vector<Scalar>& theta0, const FitOptions<Scalar>& opts) {
  using std::abs;
  if (!(opts.tol > Scalar(0))) fail(ErrorCode::InvalidArgument, "fit tolerance must be positive");

  FitResult<Scalar> out;
  out.theta = theta0;
  Scalar f = objective.value(out.theta);
  Vector<Scalar> g = objective.gradient(out.theta);
  out.objective_trace.push_back(f);

  for (int iter = 0;; ++iter) {
    const Scalar gnorm = norm(g);
    if (!std::isfinite(static_cast<double>(f)) || !std::isfinite(static_cast<double>(gnorm))) {
      fail(ErrorCode::Diverged, "objective or gradient became non-finite");
    }
    if (gnorm <= opts.tol) {
      out.grad_norm = gnorm;
      out.newton_iters = iter;
      out.objective = f;
      return out;
    }
    if (iter == opts.max_iters) {
      fail(ErrorCode::MaxIterations, "Newton did not reach ||grad|| <= " +
                                         std::to_string(static_cast<double>(opts.tol)) + " in " +
                                         std::to_string(opts.max_iters) + " iterations (||grad|| = " +
                                         std::to_string(static_cast<double>(gnorm)) + ")");
    }

    SymMatrix<Scalar> h = objective.hessian(out.theta);
    Vector<Scalar> step;
    try {
      step = -cholesky_solve(h, g);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotPositiveDefinite) throw;
      h.add_diagonal(opts.fallback_damping);
      step = -cholesky_solve(h, g);
    }

    const Scalar slope = dot(g, step);
    // Below this decrement the objective cannot resolve the Armijo test.
    const bool negligible =
        -slope <= Scalar(64) * std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + abs(f));

    Scalar t(1);
    bool accepted = false;
    Vector<Scalar> trial;
    Scalar f_trial(0);
    for (int halving = 0; halving <= opts.max_halvings; ++halving) {
      trial = out.theta + t * step;
      f_trial = objective.value(trial);
      if (f_trial <= f + opts.armijo * t * slope) {
        accepted = true;
        break;
      }
      if (negligible) {
        const Vector<Scalar> g_trial = objective.gradient(trial);
        if (norm(g_trial) < gnorm) {
          accepted = true;
          break;
        }
      }
      t /= Scalar(2);
    }
    if (!accepted) {
      if (f_trial > f) {
        fail(ErrorCode::Diverged, "line search exhausted " + std::to_string(opts.max_halvings) +
                                      " halvings without decrease");
      }
    }
    out.theta = std::move(trial);
    f = f_trial;
    g = objective.gradient(out.theta);
    out.objective_trace.push_back(f);
  }
}

template <typename Scalar>
FitResult<Scalar> fit_weighted(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                               const Vector<Scalar>& weights, const Vector<Scalar>& theta0,
                               const FitOptions<Scalar>& opts = {}) {
  if (weights.size() != data.size()) fail(ErrorCode::DimensionMismatch, "fit_weighted: weights");
  Scalar total(0);
  for (Index i = 0; i < weights.size(); ++i) {
    if (weights(i) < Scalar(0)) fail(ErrorCode::InvalidArgument, "fit_weighted: negative weight");
    total += weights(i);
  }
  if (!(total > Scalar(0))) fail(ErrorCode::AllZeroWeights, "fit_weighted: all weights are zero");
  if (theta0.size() != model.param_dim()) fail(ErrorCode::DimensionMismatch, "fit: theta0 size");
  WeightedObjective<Scalar> objective(model, data, weights);
  return newton_minimize(objective, theta0, opts);
}

/// theta_n = argmin (1/n) sum_i l(Z_i, theta).
template <typename Scalar>
FitResult<Scalar> fit(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                      const Vector<Scalar>& theta0, const FitOptions<Scalar>& opts = {}) {
  const Vector<Scalar> uniform =
      Vector<Scalar>::Constant(data.size(), Scalar(1) / Scalar(data.size()));
  return fit_weighted(model, data, uniform, theta0, opts);
}

/// argmin (1 - eps)/n sum_i l(Z_i, theta) + eps l(z, theta). Warm-start at
/// theta_n to stay in the implicit-function regime.
template <typename Scalar>
FitResult<Scalar> fit_perturbed(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                                const DataPoint<Scalar>& z, Scalar eps,
                                const Vector<Scalar>& theta0, const FitOptions<Scalar>& opts = {}) {
  if (!(eps >= Scalar(0) && eps < Scalar(1))) {
    fail(ErrorCode::InvalidArgument, "fit_perturbed: eps must lie in [0, 1)");
  }
  if (theta0.size() != model.param_dim()) fail(ErrorCode::DimensionMismatch, "fit: theta0 size");
  const Vector<Scalar> weights =
      Vector<Scalar>::Constant(data.size(), (Scalar(1) - eps) / Scalar(data.size()));
  WeightedObjective<Scalar> objective(model, data, weights);
  if (eps != Scalar(0)) objective.add_point(z, eps);
  return newton_minimize(objective, theta0, opts);
}

/// H_n(theta) = (1/n) sum_i hess l(Z_i, theta) + ridge I.
template <typename Scalar, typename DT>
SymMatrix<Scalar> batch_hessian(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                                const Eigen::MatrixBase<DT>& theta) {
  SymMatrix<Scalar> h(model.param_dim());
  const Scalar w = Scalar(1) / Scalar(data.size());
  for (Index i = 0; i < data.size(); ++i) add_data_hessian(model, data.x(i), data.y(i), theta, w, h);
  h.add_diagonal(model.ridge);
  return h;
}

/// (1/n) sum_i grad l(Z_i, theta), ridge included.
template <typename Scalar, typename DT>
Vector<Scalar> batch_gradient(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                              const Eigen::MatrixBase<DT>& theta) {
  Vector<Scalar> g = model.ridge * theta;
  const Scalar w = Scalar(1) / Scalar(data.size());
  for (Index i = 0; i < data.size(); ++i) add_data_gradient(model, data.x(i), data.y(i), theta, w, g);
  return g;
}

template <typename Scalar>
LossModel<Scalar> model_for(const Dataset<Scalar>& data, Scalar ridge) {
  return LossModel<Scalar>{data.family(), data.features(), ridge};
}

}  // namespace inflab
