#pragma once

// Inverse-Hessian-vector products u* = -(H + damping I)^{-1} v, computed by
// minimizing g(u) = 1/2 <u, (H + damping I) u> + <v, u>.
//
// All solvers talk to the Hessian through an HvpOracle and report their cost
// in oracle calls: one per-point Hessian-vector product counts 1, one batch
// product counts n.

#include <cmath>
#include <limits>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "inflab/glm.hpp"
#include "inflab/linalg.hpp"
#include "inflab/rng.hpp"

namespace inflab {

enum class IhvpMethod { Exact, CG, SGD, LiSSA, SVRG, AccelSVRG, Arnoldi };

inline std::string to_string(IhvpMethod m) {
  switch (m) {
    case IhvpMethod::Exact: return "exact";
    case IhvpMethod::CG: return "cg";
    case IhvpMethod::SGD: return "sgd";
    case IhvpMethod::LiSSA: return "lissa";
    case IhvpMethod::SVRG: return "svrg";
    case IhvpMethod::AccelSVRG: return "accel_svrg";
    case IhvpMethod::Arnoldi: return "arnoldi";
  }
  return "unknown";
}

inline IhvpMethod parse_ihvp_method(const std::string& s) {
  for (auto m : {IhvpMethod::Exact, IhvpMethod::CG, IhvpMethod::SGD, IhvpMethod::LiSSA,
                 IhvpMethod::SVRG, IhvpMethod::AccelSVRG, IhvpMethod::Arnoldi}) {
    if (s == to_string(m)) return m;
  }
  fail(ErrorCode::ConfigError, "unknown ihvp method '" + s + "'");
}

/// Hessian-vector products at a fixed parameter, per point and averaged.
template <typename Scalar>
class HvpOracle {
 public:
  explicit HvpOracle(Scalar damping = Scalar(0)) : damping_(damping) {
    if (damping < Scalar(0)) fail(ErrorCode::InvalidArgument, "damping must be nonnegative");
  }
  virtual ~HvpOracle() = default;

  virtual Index size() const = 0;
  virtual Index dim() const = 0;
  /// Upper bound on the spectral norm of every damped point Hessian.
  virtual Scalar smoothness() const = 0;

  Scalar damping() const { return damping_; }

  /// out = (hess_i + damping I) u
  void point_hvp(Index i, const Vector<Scalar>& u, Vector<Scalar>& out) const {
    raw_point_hvp(i, u, out);
    if (damping_ != Scalar(0)) out += damping_ * u;
  }

  /// out = (H + damping I) u with H the mean point Hessian.
  virtual void batch_hvp(const Vector<Scalar>& u, Vector<Scalar>& out) const {
    out.setZero(dim());
    Vector<Scalar> tmp(dim());
    for (Index i = 0; i < size(); ++i) {
      raw_point_hvp(i, u, tmp);
      out += tmp;
    }
    out /= Scalar(size());
    if (damping_ != Scalar(0)) out += damping_ * u;
  }

 protected:
  virtual void raw_point_hvp(Index i, const Vector<Scalar>& u, Vector<Scalar>& out) const = 0;

 private:
  Scalar damping_;
};

/// Oracle over explicit per-point Hessian matrices.
template <typename Scalar>
class MatrixHvpOracle final : public HvpOracle<Scalar> {
 public:
  explicit MatrixHvpOracle(std::vector<SymMatrix<Scalar>> hessians, Scalar damping = Scalar(0))
      : HvpOracle<Scalar>(damping), hessians_(std::move(hessians)) {
    if (hessians_.empty()) fail(ErrorCode::EmptyDataset, "MatrixHvpOracle needs at least one matrix");
    smoothness_ = Scalar(0);
    for (const auto& h : hessians_) {
      if (h.dim() != hessians_.front().dim()) fail(ErrorCode::DimensionMismatch, "per-point Hessian sizes differ");
      smoothness_ = std::max(smoothness_, spectral_norm(h));
    }
    smoothness_ += damping;
  }

  Index size() const override { return static_cast<Index>(hessians_.size()); }
  Index dim() const override { return hessians_.front().dim(); }
  Scalar smoothness() const override { return smoothness_; }

 protected:
  void raw_point_hvp(Index i, const Vector<Scalar>& u, Vector<Scalar>& out) const override {
    out = hessians_[static_cast<std::size_t>(i)].apply(u);
  }

 private:
  std::vector<SymMatrix<Scalar>> hessians_;
  Scalar smoothness_;
};

/// Oracle for a GLM at a fitted parameter. Scalar-link curvatures are cached,
/// so a point product costs two length-p passes.
template <typename Scalar>
class GlmHvpOracle final : public HvpOracle<Scalar> {
 public:
  GlmHvpOracle(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
               const Vector<Scalar>& theta, Scalar damping = Scalar(0))
      : HvpOracle<Scalar>(damping), model_(model), data_(data), theta_(theta) {
    if (theta.size() != model.param_dim()) fail(ErrorCode::DimensionMismatch, "GlmHvpOracle theta");
    const bool scalar_link = model.family.kind != LossFamily::Kind::MulticlassLogistic;
    if (scalar_link) {
      curvature_.resize(data.size());
      Scalar top(0);
      for (Index i = 0; i < data.size(); ++i) {
        curvature_(i) = detail::scalar_link(model.family, dot(theta, data.x(i)), data.y(i)).d2;
        top = std::max(top, curvature_(i) * squared_norm(data.x(i)));
      }
      smoothness_ = top + model.ridge + damping;
    } else {
      smoothness_ = smoothness_L(model, data) + damping;
    }
  }

  Index size() const override { return data_.size(); }
  Index dim() const override { return model_.param_dim(); }
  /// max_i ||hess l(Z_i, theta)||_2 at the stored theta (multiclass: the global bound).
  Scalar smoothness() const override { return smoothness_; }

  const Vector<Scalar>& theta() const { return theta_; }

 protected:
  void raw_point_hvp(Index i, const Vector<Scalar>& u, Vector<Scalar>& out) const override {
    if (curvature_.size() == 0) {
      out = hess_vec(model_, data_.x(i), data_.y(i), theta_, u);
      return;
    }
    const auto x = data_.x(i);
    out = model_.ridge * u;
    out += (curvature_(i) * dot(x, u)) * x;
  }

 private:
  const LossModel<Scalar>& model_;
  const Dataset<Scalar>& data_;
  Vector<Scalar> theta_;
  Vector<Scalar> curvature_;
  Scalar smoothness_;
};

enum class InitialGuess { Zero, NegativeRhs };

template <typename Scalar>
struct SolverConfig {
  IhvpMethod method = IhvpMethod::CG;
  Index max_iters = 100;       // CG iterations; SGD steps; LiSSA steps when epoch_len = 0
  Scalar step_size = Scalar(0);  // 0 selects the method default from the oracle smoothness L
  Index epoch_len = 0;         // SVRG inner steps (0: 2n); LiSSA steps per run (0: max_iters)
  Index repeats = 1;           // LiSSA independent runs S
  Index epochs = 20;           // SVRG epochs; accelerated SVRG total inner epochs
  Index rank = 0;              // Arnoldi k (0: krylov_dim)
  Index krylov_dim = 0;        // Arnoldi T (0: p)
  std::uint64_t rng_seed = 0;
  Scalar tolerance = Scalar(1e-10);  // relative residual (CG) / anchor gradient (SVRG) stop; 0 disables
  InitialGuess initial = InitialGuess::Zero;  // SGD and SVRG starting point
  bool tail_average = true;                   // SGD returns the mean of iterates t in (T/2, T]
  Scalar catalyst_kappa = Scalar(-1);    // accelerated SVRG regularization; < 0 selects (L-mu)/(n+1) - mu
  Scalar strong_convexity = Scalar(0);   // mu for accelerated SVRG; 0 estimates it with Arnoldi
  Index inner_epochs = 1;                // SVRG epochs per accelerated outer step
};

template <typename Scalar>
struct IhvpSolution {
  Vector<Scalar> u;
  std::uint64_t oracle_calls = 0;
  Index iterations = 0;
  IhvpMethod method = IhvpMethod::Exact;
  Scalar residual_norm = Scalar(0);     // ||(H + damping) u + v||_2, recomputed at return
  std::uint64_t diagnostic_calls = 0;   // residual evaluation, not in oracle_calls
  Scalar step_size = Scalar(0);
  bool breakdown = false;
};

template <typename Scalar>
struct IterateEvent {
  Index run;  // LiSSA run index, 0 elsewhere
  Index iteration;
  std::uint64_t oracle_calls;
  const Vector<Scalar>& iterate;
};

template <typename Scalar>
using IterateObserver = std::function<void(const IterateEvent<Scalar>&)>;

namespace detail {

template <typename Scalar>
class MeteredOracle {
 public:
  explicit MeteredOracle(const HvpOracle<Scalar>& oracle) : oracle_(oracle) {}

  void point(Index i, const Vector<Scalar>& u, Vector<Scalar>& out) {
    oracle_.point_hvp(i, u, out);
    ++calls_;
  }
  void batch(const Vector<Scalar>& u, Vector<Scalar>& out) {
    oracle_.batch_hvp(u, out);
    calls_ += static_cast<std::uint64_t>(oracle_.size());
  }

  const HvpOracle<Scalar>& oracle() const { return oracle_; }
  std::uint64_t calls() const { return calls_; }
  void charge(std::uint64_t extra) { calls_ += extra; }

 private:
  const HvpOracle<Scalar>& oracle_;
  std::uint64_t calls_ = 0;
};

template <typename Scalar>
void check_rhs(const HvpOracle<Scalar>& oracle, const Vector<Scalar>& v) {
  if (v.size() != oracle.dim()) {
    fail(ErrorCode::DimensionMismatch, "rhs has size " + std::to_string(v.size()) +
                                           ", oracle dimension is " + std::to_string(oracle.dim()));
  }
}

template <typename Scalar>
void check_finite(const Vector<Scalar>& u, const char* method, Index iteration) {
  if (!all_finite(u)) {
    fail(ErrorCode::DivergedNonFinite, std::string(method) + " iterate became non-finite at step " +
                                           std::to_string(iteration) + " (step size too large?)");
  }
}

template <typename Scalar>
void notify(const IterateObserver<Scalar>& observer, Index run, Index iteration,
            std::uint64_t calls, const Vector<Scalar>& u) {
  if (observer) observer(IterateEvent<Scalar>{run, iteration, calls, u});
}

template <typename Scalar>
IhvpSolution<Scalar> finish(const HvpOracle<Scalar>& oracle, const Vector<Scalar>& v,
                            IhvpSolution<Scalar> sol) {
  Vector<Scalar> hu;
  oracle.batch_hvp(sol.u, hu);
  sol.residual_norm = norm(Vector<Scalar>(hu + v));
  sol.diagnostic_calls = static_cast<std::uint64_t>(oracle.size());
  return sol;
}

template <typename Scalar>
Vector<Scalar> initial_point(InitialGuess guess, const Vector<Scalar>& v) {
  return guess == InitialGuess::Zero ? Vector<Scalar>::Zero(v.size()) : Vector<Scalar>(-v);
}

}  // namespace detail

/// Dense reference: u = -(H + damping I)^{-1} v by Cholesky. Reports n p
/// oracle calls, the cost of materializing H column by column.
template <typename Scalar>
IhvpSolution<Scalar> solve_exact(const SymMatrix<Scalar>& h, const Vector<Scalar>& v,
                                 Scalar damping = Scalar(0), Index n = 1) {
  if (v.size() != h.dim()) fail(ErrorCode::DimensionMismatch, "solve_exact: rhs size");
  SymMatrix<Scalar> shifted = h;
  shifted.add_diagonal(damping);
  IhvpSolution<Scalar> sol;
  sol.method = IhvpMethod::Exact;
  sol.u = -cholesky_solve(shifted, v);
  sol.oracle_calls = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(h.dim());
  sol.residual_norm = norm(Vector<Scalar>(shifted.apply(sol.u) + v));
  return sol;
}

/// Materializes H + damping I from p batch products.
template <typename Scalar>
SymMatrix<Scalar> materialize(const HvpOracle<Scalar>& oracle) {
  const Index p = oracle.dim();
  Matrix<Scalar> cols(p, p);
  Vector<Scalar> e = Vector<Scalar>::Zero(p), out;
  for (Index j = 0; j < p; ++j) {
    e(j) = Scalar(1);
    oracle.batch_hvp(e, out);
    cols.col(j) = out;
    e(j) = Scalar(0);
  }
  return SymMatrix<Scalar>::symmetrized(cols);
}

template <typename Scalar>
IhvpSolution<Scalar> solve_exact(const HvpOracle<Scalar>& oracle, const Vector<Scalar>& v) {
  detail::check_rhs(oracle, v);
  auto sol = solve_exact(materialize(oracle), v, Scalar(0), oracle.size());
  return detail::finish(oracle, v, std::move(sol));
}

/// Conjugate gradient from u0 = 0 with r = -v - H u, alpha = d^T r / d^T H d,
/// beta = |r_new|^2 / |r|^2. The residual is updated by recurrence, so each
/// iteration costs one batch product (n oracle calls).
template <typename Scalar>
IhvpSolution<Scalar> solve_cg(const HvpOracle<Scalar>& oracle, const Vector<Scalar>& v,
                              const SolverConfig<Scalar>& cfg,
                              const IterateObserver<Scalar>& observer = {}) {
  using std::sqrt;
  detail::check_rhs(oracle, v);
  detail::MeteredOracle<Scalar> meter(oracle);
  IhvpSolution<Scalar> sol;
  sol.method = IhvpMethod::CG;
  sol.u = Vector<Scalar>::Zero(v.size());
  Vector<Scalar> r = -v;
  Vector<Scalar> d = r;
  Vector<Scalar> hd;
  Scalar rr = squared_norm(r);
  // Below ~eps * |v| the recurrence residual no longer tracks the true one;
  // iterating further only drives it toward underflow.
  const Scalar floor = Scalar(1e-3) * std::numeric_limits<Scalar>::epsilon() * norm(v);
  const Scalar stop = std::max(cfg.tolerance * norm(v), floor);
  detail::notify(observer, Index(0), Index(0), meter.calls(), sol.u);

  Index t = 0;
  while (t < cfg.max_iters && rr != Scalar(0) && sqrt(rr) > stop) {
    meter.batch(d, hd);
    const Scalar curvature = dot(d, hd);
    if (!(curvature > Scalar(0))) {
      fail(ErrorCode::BreakdownZeroCurvature,
           "d^T H d = " + std::to_string(static_cast<double>(curvature)) + " at iteration " +
               std::to_string(t));
    }
    const Scalar alpha = dot(d, r) / curvature;
    sol.u += alpha * d;
    r -= alpha * hd;
    const Scalar rr_next = squared_norm(r);
    ++t;
    detail::check_finite(sol.u, "cg", t);
    detail::notify(observer, Index(0), t, meter.calls(), sol.u);
    const Scalar beta = rr_next / rr;
    d = r + beta * d;
    rr = rr_next;
  }
  sol.iterations = t;
  sol.oracle_calls = meter.calls();
  return detail::finish(oracle, v, std::move(sol));
}

/// u_{t+1} = u_t - gamma (HVP(i_t, u_t) + v), i_t uniform, one oracle call per step.
/// Returns the tail average over t in (T/2, T] unless tail_average is off.
template <typename Scalar>
IhvpSolution<Scalar> solve_sgd(const HvpOracle<Scalar>& oracle, const Vector<Scalar>& v,
                               const SolverConfig<Scalar>& cfg,
                               const IterateObserver<Scalar>& observer = {}) {
  detail::check_rhs(oracle, v);
  detail::MeteredOracle<Scalar> meter(oracle);
  const Scalar gamma =
      cfg.step_size > Scalar(0) ? cfg.step_size : Scalar(1) / (Scalar(2) * oracle.smoothness());
  const Index steps = cfg.max_iters;
  const rng::IndexStream stream(rng::derive(cfg.rng_seed, 0),
                                static_cast<std::uint64_t>(oracle.size()));

  Vector<Scalar> u = detail::initial_point(cfg.initial, v);
  Vector<Scalar> hu(v.size());
  Vector<Scalar> tail = Vector<Scalar>::Zero(v.size());
  Index tail_count = 0;
  detail::notify(observer, Index(0), Index(0), meter.calls(), u);
  for (Index t = 0; t < steps; ++t) {
    meter.point(static_cast<Index>(stream(static_cast<std::uint64_t>(t))), u, hu);
    u -= gamma * (hu + v);
    detail::check_finite(u, "sgd", t + 1);
    detail::notify(observer, Index(0), t + 1, meter.calls(), u);
    if (2 * (t + 1) > steps) {
      tail += u;
      ++tail_count;
    }
  }

  IhvpSolution<Scalar> sol;
  sol.method = IhvpMethod::SGD;
  sol.u = (cfg.tail_average && tail_count > 0) ? Vector<Scalar>(tail / Scalar(tail_count)) : u;
  sol.iterations = steps;
  sol.oracle_calls = meter.calls();
  sol.step_size = gamma;
  return detail::finish(oracle, v, std::move(sol));
}

/// S independent runs of u_{t+1} = -gamma v + u_t - gamma HVP(i_t, u_t) from
/// u_0 = -v, averaged. The fixed point of this recurrence is already
/// -(H + damping)^{-1} v, so no output rescaling is applied.
template <typename Scalar>
IhvpSolution<Scalar> solve_lissa(const HvpOracle<Scalar>& oracle, const Vector<Scalar>& v,
                                 const SolverConfig<Scalar>& cfg,
                                 const IterateObserver<Scalar>& observer = {}) {
  detail::check_rhs(oracle, v);
  if (cfg.repeats < 1) fail(ErrorCode::InvalidArgument, "lissa needs repeats >= 1");
  detail::MeteredOracle<Scalar> meter(oracle);
  const Scalar gamma = cfg.step_size > Scalar(0) ? cfg.step_size : Scalar(1) / oracle.smoothness();
  const Index steps = cfg.epoch_len > 0 ? cfg.epoch_len : cfg.max_iters;

  Vector<Scalar> sum = Vector<Scalar>::Zero(v.size());
  Vector<Scalar> hu(v.size());
  for (Index s = 0; s < cfg.repeats; ++s) {
    const rng::IndexStream stream(rng::derive(cfg.rng_seed, static_cast<std::uint64_t>(s)),
                                  static_cast<std::uint64_t>(oracle.size()));
    Vector<Scalar> u = -v;
    detail::notify(observer, s, Index(0), meter.calls(), u);
    for (Index t = 0; t < steps; ++t) {
      meter.point(static_cast<Index>(stream(static_cast<std::uint64_t>(t))), u, hu);
      u = -gamma * v + u - gamma * hu;
      detail::check_finite(u, "lissa", t + 1);
      detail::notify(observer, s, t + 1, meter.calls(), u);
    }
    sum += u;
  }

  IhvpSolution<Scalar> sol;
  sol.method = IhvpMethod::LiSSA;
  sol.u = sum / Scalar(cfg.repeats);
  sol.iterations = steps * cfg.repeats;
  sol.oracle_calls = meter.calls();
  sol.step_size = gamma;
  return detail::finish(oracle, v, std::move(sol));
}

namespace detail {

struct SvrgRunStats {
  Index epochs = 0;
  bool converged = false;
};

/// SVRG epochs on g(u) + (shift/2) |u - center|^2. The anchor gradient is
/// H u0 + v (+ shift (u0 - center)), the true gradient of that objective.
template <typename Scalar>
SvrgRunStats svrg_epochs(MeteredOracle<Scalar>& meter, const Vector<Scalar>& v, Scalar shift,
                         const Vector<Scalar>& center, Vector<Scalar>& u, Scalar gamma,
                         Index epoch_len, Index epochs, std::uint64_t seed, Scalar stop,
                         const std::function<void(Index, const Vector<Scalar>&)>& after_epoch) {
  const auto n = static_cast<std::uint64_t>(meter.oracle().size());
  Vector<Scalar> anchor, full, a(v.size()), b(v.size());
  SvrgRunStats stats;
  for (Index s = 0; s < epochs; ++s) {
    anchor = u;
    meter.batch(anchor, full);
    full += v;
    if (stop > Scalar(0) && norm(full) <= stop) {
      stats.converged = true;
      return stats;
    }
    if (shift != Scalar(0)) full += shift * (anchor - center);
    const rng::IndexStream stream(rng::derive(seed, static_cast<std::uint64_t>(s)), n);
    for (Index t = 0; t < epoch_len; ++t) {
      const auto i = static_cast<Index>(stream(static_cast<std::uint64_t>(t)));
      meter.point(i, u, a);
      meter.point(i, anchor, b);
      if (shift != Scalar(0)) {
        u -= gamma * (a - b + shift * (u - anchor) + full);
      } else {
        u -= gamma * (a - b + full);
      }
    }
    check_finite(u, "svrg", s + 1);
    ++stats.epochs;
    if (after_epoch) after_epoch(stats.epochs, u);
  }
  return stats;
}

}  // namespace detail

/// Variance-reduced SGD: each epoch computes the full gradient at an anchor
/// (n calls) and runs epoch_len corrected steps (2 calls each).
template <typename Scalar>
IhvpSolution<Scalar> solve_svrg(const HvpOracle<Scalar>& oracle, const Vector<Scalar>& v,
                                const SolverConfig<Scalar>& cfg,
                                const IterateObserver<Scalar>& observer = {}) {
  detail::check_rhs(oracle, v);
  detail::MeteredOracle<Scalar> meter(oracle);
  const Scalar gamma =
      cfg.step_size > Scalar(0) ? cfg.step_size : Scalar(1) / (Scalar(4) * oracle.smoothness());
  const Index epoch_len = cfg.epoch_len > 0 ? cfg.epoch_len : 2 * oracle.size();

  Vector<Scalar> u = detail::initial_point(cfg.initial, v);
  detail::notify(observer, Index(0), Index(0), meter.calls(), u);
  const auto stats = detail::svrg_epochs<Scalar>(
      meter, v, Scalar(0), u, u, gamma, epoch_len, cfg.epochs, cfg.rng_seed,
      cfg.tolerance * norm(v), [&](Index epoch, const Vector<Scalar>& it) {
        detail::notify(observer, Index(0), epoch, meter.calls(), it);
      });

  IhvpSolution<Scalar> sol;
  sol.method = IhvpMethod::SVRG;
  sol.u = std::move(u);
  sol.iterations = stats.epochs;
  sol.oracle_calls = meter.calls();
  sol.step_size = gamma;
  return detail::finish(oracle, v, std::move(sol));
}

template <typename Scalar>
struct LowRankFactorization {
  Vector<Scalar> eigenvalues;   // top-k Ritz values, descending
  Matrix<Scalar> ritz_vectors;  // p x k, column j = W^T e_j
  Matrix<Scalar> basis;         // p x T orthonormal Krylov basis
  Matrix<Scalar> reduced;       // (T + 1) x T Hessenberg matrix
  Index krylov_dim = 0;         // T actually built (smaller after breakdown)
  bool breakdown = false;
  std::uint64_t oracle_calls = 0;

  Index rank() const { return eigenvalues.size(); }

  /// G u = (<u, W^T e_1>, ..., <u, W^T e_k>)
  Vector<Scalar> project(const Vector<Scalar>& u) const {
    Vector<Scalar> out(rank());
    for (Index j = 0; j < rank(); ++j) out(j) = dot(ritz_vectors.col(j), u);
    return out;
  }
};

/// Arnoldi iteration with classical Gram-Schmidt applied twice. Stops early
/// (breakdown) once the new direction vanishes, i.e. an invariant subspace
/// has been found; the factorization then uses the reduced T.
template <typename Scalar>
LowRankFactorization<Scalar> arnoldi_factorize(const HvpOracle<Scalar>& oracle,
                                               const Vector<Scalar>& start, Index krylov_dim,
                                               Index rank) {
  using std::max;
  const Index p = oracle.dim();
  if (start.size() != p) fail(ErrorCode::DimensionMismatch, "arnoldi: start vector size");
  if (!(rank >= 1 && rank <= krylov_dim && krylov_dim <= p)) {
    fail(ErrorCode::InvalidArgument, "arnoldi needs 1 <= k <= T <= p (k=" + std::to_string(rank) +
                                         ", T=" + std::to_string(krylov_dim) +
                                         ", p=" + std::to_string(p) + ")");
  }
  const Scalar start_norm = norm(start);
  if (!(start_norm > Scalar(0))) fail(ErrorCode::InvalidArgument, "arnoldi start vector is zero");

  detail::MeteredOracle<Scalar> meter(oracle);
  LowRankFactorization<Scalar> fac;
  Matrix<Scalar> w(p, krylov_dim);
  Matrix<Scalar> a = Matrix<Scalar>::Zero(krylov_dim + 1, krylov_dim);
  w.col(0) = start / start_norm;
  Index built = krylov_dim;
  Vector<Scalar> z;
  for (Index t = 0; t < krylov_dim; ++t) {
    meter.batch(Vector<Scalar>(w.col(t)), z);
    const Scalar hw_norm = norm(z);
    for (int pass = 0; pass < 2; ++pass) {
      Vector<Scalar> coef(t + 1);
      for (Index j = 0; j <= t; ++j) coef(j) = dot(z, w.col(j));
      for (Index j = 0; j <= t; ++j) {
        z -= coef(j) * w.col(j);
        a(j, t) += coef(j);
      }
    }
    const Scalar beta = norm(z);
    a(t + 1, t) = beta;
    if (t + 1 == krylov_dim) break;
    if (beta <= Scalar(1e-14) * max(Scalar(1), hw_norm)) {
      built = t + 1;
      fac.breakdown = true;
      break;
    }
    w.col(t + 1) = z / beta;
  }

  fac.krylov_dim = built;
  fac.basis = w.leftCols(built);
  fac.reduced = a.topLeftCorner(built + 1, built);
  fac.oracle_calls = meter.calls();

  const auto eig = sym_eigen(SymMatrix<Scalar>::symmetrized(a.topLeftCorner(built, built)));
  const Index k = std::min(rank, built);
  fac.eigenvalues = eig.eigenvalues.head(k);
  fac.ritz_vectors = fac.basis * eig.eigenvectors.leftCols(k);
  return fac;
}

namespace detail {
template <typename Scalar>
void check_ritz(const LowRankFactorization<Scalar>& fac) {
  for (Index j = 0; j < fac.rank(); ++j) {
    if (!(fac.eigenvalues(j) > Scalar(0))) {
      fail(ErrorCode::NonpositiveRitzValue,
           "Ritz value " + std::to_string(j) + " is " +
               std::to_string(static_cast<double>(fac.eigenvalues(j))));
    }
  }
}
}  // namespace detail

/// Rank-k inverse: -sum_j r_j <r_j, v> / lambda_j.
template <typename Scalar>
Vector<Scalar> solve_lowrank(const LowRankFactorization<Scalar>& fac, const Vector<Scalar>& v) {
  detail::check_ritz(fac);
  if (v.size() != fac.ritz_vectors.rows()) fail(ErrorCode::DimensionMismatch, "solve_lowrank");
  Vector<Scalar> out = Vector<Scalar>::Zero(v.size());
  const Vector<Scalar> gv = fac.project(v);
  for (Index j = 0; j < fac.rank(); ++j) out -= (gv(j) / fac.eigenvalues(j)) * fac.ritz_vectors.col(j);
  return out;
}

/// <G grad_h, Lambda^{-1} G v>, the low-rank estimate of <grad_h, H^{-1} v>.
template <typename Scalar>
Scalar lowrank_inner(const LowRankFactorization<Scalar>& fac, const Vector<Scalar>& grad_h,
                     const Vector<Scalar>& v) {
  detail::check_ritz(fac);
  const Vector<Scalar> gh = fac.project(grad_h);
  const Vector<Scalar> gv = fac.project(v);
  Scalar acc(0);
  for (Index j = 0; j < fac.rank(); ++j) acc += gh(j) * gv(j) / fac.eigenvalues(j);
  return acc;
}

template <typename Scalar>
Vector<Scalar> seeded_start_vector(Index p, std::uint64_t seed) {
  rng::SplitMix64 gen(seed);
  Vector<Scalar> out(p);
  for (Index i = 0; i < p; ++i) out(i) = Scalar(gen.normal());
  return out;
}

template <typename Scalar>
IhvpSolution<Scalar> solve_arnoldi(const HvpOracle<Scalar>& oracle, const Vector<Scalar>& v,
                                   const SolverConfig<Scalar>& cfg) {
  detail::check_rhs(oracle, v);
  const Index krylov = cfg.krylov_dim > 0 ? cfg.krylov_dim : oracle.dim();
  const Index rank = cfg.rank > 0 ? cfg.rank : krylov;
  const auto fac = arnoldi_factorize(
      oracle, seeded_start_vector<Scalar>(oracle.dim(), rng::derive(cfg.rng_seed, 0)), krylov,
      rank);
  IhvpSolution<Scalar> sol;
  sol.method = IhvpMethod::Arnoldi;
  sol.u = solve_lowrank(fac, v);
  sol.iterations = fac.krylov_dim;
  sol.oracle_calls = fac.oracle_calls;
  sol.breakdown = fac.breakdown;
  return detail::finish(oracle, v, std::move(sol));
}

/// Catalyst-accelerated SVRG: inexact proximal-point steps on
/// g(u) + (kappa/2)|u - y|^2, each solved by warm-started SVRG, with
/// extrapolation y = x_k + beta (x_k - x_{k-1}), beta = (1 - sqrt q)/(1 + sqrt q),
/// q = mu / (mu + kappa). kappa = 0 is plain SVRG.
template <typename Scalar>
IhvpSolution<Scalar> solve_accel_svrg(const HvpOracle<Scalar>& oracle, const Vector<Scalar>& v,
                                      const SolverConfig<Scalar>& cfg,
                                      const IterateObserver<Scalar>& observer = {}) {
  using std::sqrt;
  detail::check_rhs(oracle, v);
  const Scalar smooth = oracle.smoothness();
  const auto n = oracle.size();

  std::uint64_t estimate_calls = 0;
  Scalar mu = cfg.strong_convexity;
  if (!(mu > Scalar(0))) {
    const auto fac = arnoldi_factorize(
        oracle, seeded_start_vector<Scalar>(oracle.dim(), rng::derive(cfg.rng_seed, 1)),
        oracle.dim(), oracle.dim());
    mu = fac.eigenvalues(fac.rank() - 1);
    estimate_calls = fac.oracle_calls;
    if (!(mu > Scalar(0))) fail(ErrorCode::NonpositiveRitzValue, "accel_svrg: estimated mu <= 0");
  }
  const Scalar kappa = cfg.catalyst_kappa >= Scalar(0)
                           ? cfg.catalyst_kappa
                           : std::max((smooth - mu) / Scalar(n + 1) - mu, Scalar(0));

  if (kappa == Scalar(0)) {
    auto sol = solve_svrg(oracle, v, cfg, observer);
    sol.method = IhvpMethod::AccelSVRG;
    sol.oracle_calls += estimate_calls;
    return sol;
  }

  const Scalar q = mu / (mu + kappa);
  const Scalar beta = (Scalar(1) - sqrt(q)) / (Scalar(1) + sqrt(q));
  const Scalar gamma =
      cfg.step_size > Scalar(0) ? cfg.step_size : Scalar(1) / (Scalar(4) * (smooth + kappa));
  const Index epoch_len = cfg.epoch_len > 0 ? cfg.epoch_len : 2 * n;
  const Index inner = std::max<Index>(cfg.inner_epochs, 1);
  const Index outer = cfg.epochs / inner;
  const Scalar stop = cfg.tolerance * norm(v);

  detail::MeteredOracle<Scalar> meter(oracle);
  meter.charge(estimate_calls);
  Vector<Scalar> x = detail::initial_point(cfg.initial, v);
  Vector<Scalar> y = x;
  detail::notify(observer, Index(0), Index(0), meter.calls(), x);
  Index done = 0;
  for (Index k = 0; k < outer; ++k) {
    Vector<Scalar> next = x;
    const auto stats = detail::svrg_epochs<Scalar>(
        meter, v, kappa, y, next, gamma, epoch_len, inner,
        rng::derive(cfg.rng_seed, static_cast<std::uint64_t>(k) + 2), Scalar(0), {});
    // Convergence is judged on the unregularized gradient at the new iterate,
    // which the next anchor computes anyway.
    y = next + beta * (next - x);
    x = std::move(next);
    done += stats.epochs;
    detail::notify(observer, Index(0), k + 1, meter.calls(), x);
    if (stop > Scalar(0)) {
      Vector<Scalar> g;
      oracle.batch_hvp(x, g);
      if (norm(Vector<Scalar>(g + v)) <= stop) break;
    }
  }

  IhvpSolution<Scalar> sol;
  sol.method = IhvpMethod::AccelSVRG;
  sol.u = std::move(x);
  sol.iterations = done;
  sol.oracle_calls = meter.calls();
  sol.step_size = gamma;
  return detail::finish(oracle, v, std::move(sol));
}

/// Dispatches on cfg.method.
template <typename Scalar>
IhvpSolution<Scalar> solve(const HvpOracle<Scalar>& oracle, const Vector<Scalar>& v,
                           const SolverConfig<Scalar>& cfg,
                           const IterateObserver<Scalar>& observer = {}) {
  switch (cfg.method) {
    case IhvpMethod::Exact: return solve_exact(oracle, v);
    case IhvpMethod::CG: return solve_cg(oracle, v, cfg, observer);
    case IhvpMethod::SGD: return solve_sgd(oracle, v, cfg, observer);
    case IhvpMethod::LiSSA: return solve_lissa(oracle, v, cfg, observer);
    case IhvpMethod::SVRG: return solve_svrg(oracle, v, cfg, observer);
    case IhvpMethod::AccelSVRG: return solve_accel_svrg(oracle, v, cfg, observer);
    case IhvpMethod::Arnoldi: return solve_arnoldi(oracle, v, cfg);
  }
  fail(ErrorCode::UnsupportedMethod, "unknown method");
}

struct Eigendecay {
  enum class Kind { None, Polynomial, Exponential };
  Kind kind = Kind::None;
  double rate = 0.0;  // beta (> 1) or nu (> 0)

  static Eigendecay none() { return {}; }
  static Eigendecay polynomial(double beta) { return {Kind::Polynomial, beta}; }
  static Eigendecay exponential(double nu) { return {Kind::Exponential, nu}; }
};

/// Order-of-magnitude oracle-call count to reach H-norm^2 error eps, with all
/// constants set to 1:
///   cg           n sqrt(kappa) log(Delta/eps)
///   sgd, lissa   sigma2/eps + kappa log(kappa Delta/eps)
///   svrg         (n + kappa) log(kappa Delta/eps)
///   accel_svrg   (n + sqrt(n kappa)) log(kappa Delta/eps)
///   arnoldi      n (kappa Delta/eps)^(1/(beta-1))   polynomial decay i^-beta
///                (n/nu) log(kappa Delta/eps)        exponential decay e^-nu i
/// Negative logarithms (target already met) are clamped to 0.
inline double predict_cost(IhvpMethod method, double kappa, double delta, double sigma2,
                           double n, double eps, Eigendecay decay = {}) {
  if (!(eps > 0.0)) fail(ErrorCode::InvalidArgument, "predict_cost: eps must be positive");
  if (!(kappa >= 1.0)) fail(ErrorCode::InvalidArgument, "predict_cost: kappa must be >= 1");
  const auto clamp_log = [](double x) { return std::max(0.0, std::log(x)); };
  const double log_plain = clamp_log(delta / eps);
  const double log_kappa = clamp_log(kappa * delta / eps);
  switch (method) {
    case IhvpMethod::CG: return n * std::sqrt(kappa) * log_plain;
    case IhvpMethod::SGD:
    case IhvpMethod::LiSSA: return sigma2 / eps + kappa * log_kappa;
    case IhvpMethod::SVRG: return (n + kappa) * log_kappa;
    case IhvpMethod::AccelSVRG: return (n + std::sqrt(n * kappa)) * log_kappa;
    case IhvpMethod::Arnoldi:
      switch (decay.kind) {
        case Eigendecay::Kind::Polynomial:
          if (!(decay.rate > 1.0)) fail(ErrorCode::UnsupportedDecay, "polynomial decay needs beta > 1");
          return n * std::pow(std::max(kappa * delta / eps, 1.0), 1.0 / (decay.rate - 1.0));
        case Eigendecay::Kind::Exponential:
          if (!(decay.rate > 0.0)) fail(ErrorCode::UnsupportedDecay, "exponential decay needs nu > 0");
          return n / decay.rate * log_kappa;
        case Eigendecay::Kind::None: break;
      }
      fail(ErrorCode::UnsupportedDecay, "low-rank cost needs an eigendecay model");
    case IhvpMethod::Exact: break;
  }
  fail(ErrorCode::UnsupportedMethod, "no cost model for method " + to_string(method));
}

/// SGD noise sigma^2 = Tr S + p ||S||_2 with
/// S = (1/n) sum_i W_i a a^T W_i,  W_i = H^{-1/2} H_i H^{-1/2} - I,  a = H^{1/2} I_n(z),
/// where H_i are the damped point Hessians and H their mean.
template <typename Scalar>
Scalar sgd_noise_sigma2(const HvpOracle<Scalar>& oracle, const SymMatrix<Scalar>& h,
                        const Vector<Scalar>& influence) {
  using std::sqrt;
  const Index p = h.dim();
  if (influence.size() != p || oracle.dim() != p) fail(ErrorCode::DimensionMismatch, "sgd_noise_sigma2");
  const auto eig = sym_eigen(h);
  if (!(eig.eigenvalues(p - 1) > Scalar(0))) {
    fail(ErrorCode::NotPositiveDefinite, "sgd_noise_sigma2: H has eigenvalue " +
                                             std::to_string(static_cast<double>(eig.eigenvalues(p - 1))));
  }
  const auto root = eig.spectral_function([](Scalar l) { return sqrt(l); });
  const auto inv_root = eig.spectral_function([](Scalar l) { return Scalar(1) / sqrt(l); });
  const Vector<Scalar> a = root.apply(influence);
  SymMatrix<Scalar> sigma(p);
  Vector<Scalar> hi;
  const Scalar w = Scalar(1) / Scalar(oracle.size());
  for (Index i = 0; i < oracle.size(); ++i) {
    oracle.point_hvp(i, influence, hi);
    const Vector<Scalar> b = inv_root.apply(hi) - a;
    sigma.add_rank_one(w, b);
  }
  return sigma.trace() + Scalar(p) * spectral_norm(sigma);
}

inline std::vector<double> default_damping_grid() {
  return {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
}

/// Smallest damping on the grid for which g stays bounded below along 20
/// probe SGD iterates: every iterate must be finite with positive curvature
/// u^T (H + lambda I) u, since g(s u) is unbounded below in s otherwise.
template <typename Scalar>
Scalar select_damping(const HvpOracle<Scalar>& oracle, const Vector<Scalar>& v,
                      std::uint64_t seed, const std::vector<double>& grid = default_damping_grid(),
                      Index probes = 20) {
  detail::check_rhs(oracle, v);
  const rng::IndexStream stream(rng::derive(seed, 0), static_cast<std::uint64_t>(oracle.size()));
  for (const double candidate : grid) {
    const Scalar lambda = Scalar(candidate);
    const Scalar gamma = Scalar(1) / (Scalar(2) * (oracle.smoothness() + lambda));
    Vector<Scalar> u = Vector<Scalar>::Zero(v.size()), hu, full;
    bool bounded = true;
    for (Index t = 0; t < probes && bounded; ++t) {
      oracle.point_hvp(static_cast<Index>(stream(static_cast<std::uint64_t>(t))), u, hu);
      u -= gamma * (hu + lambda * u + v);
      oracle.batch_hvp(u, full);
      const Scalar curvature = dot(u, full) + lambda * squared_norm(u);
      bounded = all_finite(u) && curvature > Scalar(0);
    }
    if (bounded) return lambda;
  }
  fail(ErrorCode::NotPositiveDefinite, "no damping on the grid makes the quadratic bounded below");
}

}  // namespace inflab
