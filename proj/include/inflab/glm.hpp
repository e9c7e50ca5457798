#pragma once

// Generalized linear model losses with per-point value, gradient, Hessian
// and Hessian-vector products.
//
//   family               loss l((x, y), theta)                      R          L / ||x||^2
//   least squares        (y - t)^2 / 2                              0          1
//   binary logistic      log(1 + exp(-y t)),  y in {-1, +1}         ||x||      1/4
//   poisson              -y t + exp(t) + log(y!)                    ||x||      exp(B ||x||)
//   multiclass (K)       log(1 + sum_{k>=2} exp(w_k^T x)) - w_y^T x 2 ||x||    1/2
//
// with t = <theta, x>. Multiclass keeps class 1 as the reference (w_1 = 0),
// so theta stacks the K-1 blocks w_2, ..., w_K. The tabulated multiclass loss
// is usually printed as log(1 + sum_{i=2}^K e^{w_i^T x}) without the i = 1
// term spelled out; the softmax likelihood above is what that row denotes.
//
// Every loss carries an optional ridge term (ridge / 2) ||theta||^2, so
// averaging per-point losses yields a ridge-penalized empirical risk.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "inflab/linalg.hpp"

namespace inflab {

struct LossFamily {
  enum class Kind { LeastSquares, BinaryLogistic, Poisson, MulticlassLogistic };

  Kind kind = Kind::LeastSquares;
  int classes = 0;  // multiclass only

  static LossFamily least_squares() { return {Kind::LeastSquares, 0}; }
  static LossFamily binary_logistic() { return {Kind::BinaryLogistic, 0}; }
  static LossFamily poisson() { return {Kind::Poisson, 0}; }
  static LossFamily multiclass(int k) {
    if (k < 2) fail(ErrorCode::InvalidArgument, "multiclass needs K >= 2, got " + std::to_string(k));
    return {Kind::MulticlassLogistic, k};
  }

  /// Parameter blocks per feature vector: 1, or K-1 for multiclass.
  int blocks() const { return kind == Kind::MulticlassLogistic ? classes - 1 : 1; }

  friend bool operator==(const LossFamily&, const LossFamily&) = default;
};

inline std::string to_string(const LossFamily& f) {
  switch (f.kind) {
    case LossFamily::Kind::LeastSquares: return "least_squares";
    case LossFamily::Kind::BinaryLogistic: return "logistic";
    case LossFamily::Kind::Poisson: return "poisson";
    case LossFamily::Kind::MulticlassLogistic: return "multiclass:" + std::to_string(f.classes);
  }
  return "unknown";
}

/// Accepts least_squares|linear, logistic|binary_logistic, poisson, multiclass:K.
inline LossFamily parse_loss_family(const std::string& text) {
  if (text == "least_squares" || text == "linear") return LossFamily::least_squares();
  if (text == "logistic" || text == "binary_logistic") return LossFamily::binary_logistic();
  if (text == "poisson") return LossFamily::poisson();
  if (text.rfind("multiclass:", 0) == 0) {
    const std::string k = text.substr(11);
    try {
      std::size_t used = 0;
      const int classes = std::stoi(k, &used);
      if (used == k.size()) return LossFamily::multiclass(classes);
    } catch (const std::logic_error&) {
    }
  }
  fail(ErrorCode::ConfigError, "unknown loss family '" + text + "'");
}

/// Whether y lies in the response domain of the family.
template <typename Scalar>
bool valid_response(const LossFamily& family, Scalar y) {
  using std::floor;
  if (!std::isfinite(static_cast<double>(y))) return false;
  switch (family.kind) {
    case LossFamily::Kind::LeastSquares: return true;
    case LossFamily::Kind::BinaryLogistic: return y == Scalar(1) || y == Scalar(-1);
    case LossFamily::Kind::Poisson: return y >= Scalar(0) && floor(y) == y;
    case LossFamily::Kind::MulticlassLogistic:
      return floor(y) == y && y >= Scalar(1) && y <= Scalar(family.classes);
  }
  return false;
}

template <typename Scalar>
struct DataPoint {
  Vector<Scalar> x;
  Scalar y = Scalar(0);
};

/// n x p design with responses, tagged with its loss family.
template <typename Scalar>
class Dataset {
 public:
  using FeatureMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Dataset(FeatureMatrix features, Vector<Scalar> responses, LossFamily family)
      : x_(std::move(features)), y_(std::move(responses)), family_(family) {
    if (x_.rows() == 0) fail(ErrorCode::EmptyDataset, "dataset has no points");
    if (y_.size() != x_.rows()) {
      fail(ErrorCode::DimensionMismatch, "dataset has " + std::to_string(x_.rows()) +
                                             " rows but " + std::to_string(y_.size()) +
                                             " responses");
    }
    for (Index i = 0; i < y_.size(); ++i) {
      if (!valid_response(family_, y_(i))) {
        fail(ErrorCode::DomainMismatch, "response " + std::to_string(static_cast<double>(y_(i))) +
                                            " at row " + std::to_string(i) + " invalid for " +
                                            to_string(family_));
      }
    }
  }

  Index size() const { return x_.rows(); }
  Index features() const { return x_.cols(); }
  const LossFamily& family() const { return family_; }

  auto x(Index i) const { return x_.row(i).transpose(); }
  Scalar y(Index i) const { return y_(i); }
  DataPoint<Scalar> point(Index i) const { return {x_.row(i).transpose(), y_(i)}; }

  const FeatureMatrix& feature_matrix() const { return x_; }
  const Vector<Scalar>& responses() const { return y_; }

  /// First n points. Subsamples of one stream are nested by construction.
  Dataset prefix(Index n) const {
    if (n < 1 || n > size()) fail(ErrorCode::InvalidArgument, "prefix size out of range");
    return Dataset(x_.topRows(n), y_.head(n), family_);
  }

  Dataset without(Index j) const {
    if (size() < 2) fail(ErrorCode::EmptyDataset, "cannot drop the only point");
    FeatureMatrix x(size() - 1, features());
    Vector<Scalar> y(size() - 1);
    for (Index i = 0, r = 0; i < size(); ++i) {
      if (i == j) continue;
      x.row(r) = x_.row(i);
      y(r) = y_(i);
      ++r;
    }
    return Dataset(std::move(x), std::move(y), family_);
  }

 private:
  FeatureMatrix x_;
  Vector<Scalar> y_;
  LossFamily family_;
};

template <typename Scalar>
struct LossModel {
  LossFamily family;
  Index features = 0;
  Scalar ridge = Scalar(0);

  Index param_dim() const { return features * family.blocks(); }
};

namespace detail {

template <typename Scalar>
Scalar sigmoid(Scalar s) {
  using std::exp;
  if (s >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-s));
  const Scalar e = exp(s);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar softplus(Scalar s) {
  using std::abs;
  using std::exp;
  using std::log1p;
  return std::max(s, Scalar(0)) + log1p(exp(-abs(s)));
}

/// Value and first two derivatives of the per-point loss as a function of t.
template <typename Scalar>
struct LinkTerms {
  Scalar value;
  Scalar d1;
  Scalar d2;
};

template <typename Scalar>
LinkTerms<Scalar> scalar_link(const LossFamily& family, Scalar t, Scalar y) {
  using std::exp;
  using std::lgamma;
  switch (family.kind) {
    case LossFamily::Kind::LeastSquares: {
      const Scalar r = y - t;
      return {r * r / Scalar(2), -r, Scalar(1)};
    }
    case LossFamily::Kind::BinaryLogistic: {
      const Scalar st = sigmoid(t);
      return {softplus(-y * t), -y * sigmoid(-y * t), st * sigmoid(-t)};
    }
    case LossFamily::Kind::Poisson: {
      const Scalar et = exp(t);
      return {-y * t + et + lgamma(y + Scalar(1)), et - y, et};
    }
    case LossFamily::Kind::MulticlassLogistic: break;
  }
  fail(ErrorCode::InvalidArgument, "scalar_link called for multiclass");
}

/// Class probabilities for classes 2..K (index k -> class k + 2) and the
/// log-partition function, with class 1 as the zero-logit reference.
template <typename Scalar, typename DX, typename DT>
std::pair<Vector<Scalar>, Scalar> multiclass_probs(const LossFamily& family,
                                                   const Eigen::MatrixBase<DX>& x,
                                                   const Eigen::MatrixBase<DT>& theta) {
  using std::exp;
  using std::log;
  const Index p = x.size();
  const int m = family.classes - 1;
  Vector<Scalar> logits(m);
  Scalar top(0);
  for (int k = 0; k < m; ++k) {
    logits(k) = dot(theta.segment(k * p, p), x);
    top = std::max(top, logits(k));
  }
  Scalar z = exp(-top);
  for (int k = 0; k < m; ++k) z += exp(logits(k) - top);
  const Scalar lse = top + log(z);
  Vector<Scalar> probs(m);
  for (int k = 0; k < m; ++k) probs(k) = exp(logits(k) - lse);
  return {probs, lse};
}

template <typename Scalar, typename DX, typename DT>
void check_args(const LossModel<Scalar>& model, const Eigen::MatrixBase<DX>& x, Scalar y,
                const Eigen::MatrixBase<DT>& theta) {
  if (x.size() != model.features || theta.size() != model.param_dim()) {
    fail(ErrorCode::DimensionMismatch,
         "loss model expects " + std::to_string(model.features) + " features and " +
             std::to_string(model.param_dim()) + " parameters, got " + std::to_string(x.size()) +
             " and " + std::to_string(theta.size()));
  }
  if (!valid_response(model.family, y)) {
    fail(ErrorCode::DomainMismatch, "response " + std::to_string(static_cast<double>(y)) +
                                        " invalid for " + to_string(model.family));
  }
}

}  // namespace detail

/// Per-point loss without the ridge term.
template <typename Scalar, typename DX, typename DT>
Scalar data_loss(const LossModel<Scalar>& model, const Eigen::MatrixBase<DX>& x, Scalar y,
                 const Eigen::MatrixBase<DT>& theta) {
  detail::check_args(model, x, y, theta);
  if (model.family.kind == LossFamily::Kind::MulticlassLogistic) {
    const auto [probs, lse] = detail::multiclass_probs<Scalar>(model.family, x, theta);
    const int cls = static_cast<int>(y);
    const Index p = x.size();
    const Scalar own = cls == 1 ? Scalar(0) : dot(theta.segment((cls - 2) * p, p), x);
    return lse - own;
  }
  return detail::scalar_link(model.family, dot(theta, x), y).value;
}

/// acc += weight * grad of the per-point loss (ridge excluded).
template <typename Scalar, typename DX, typename DT>
void add_data_gradient(const LossModel<Scalar>& model, const Eigen::MatrixBase<DX>& x, Scalar y,
                       const Eigen::MatrixBase<DT>& theta, Scalar weight, Vector<Scalar>& acc) {
  detail::check_args(model, x, y, theta);
  const Index p = x.size();
  if (model.family.kind == LossFamily::Kind::MulticlassLogistic) {
    const auto probs = detail::multiclass_probs<Scalar>(model.family, x, theta).first;
    const int cls = static_cast<int>(y);
    for (Index k = 0; k < probs.size(); ++k) {
      const Scalar c = weight * (probs(k) - (cls == k + 2 ? Scalar(1) : Scalar(0)));
      acc.segment(k * p, p) += c * x;
    }
    return;
  }
  const Scalar d1 = detail::scalar_link(model.family, dot(theta, x), y).d1;
  acc += (weight * d1) * x;
}

/// acc += weight * Hessian of the per-point loss (ridge excluded).
template <typename Scalar, typename DX, typename DT>
void add_data_hessian(const LossModel<Scalar>& model, const Eigen::MatrixBase<DX>& x, Scalar y,
                      const Eigen::MatrixBase<DT>& theta, Scalar weight, SymMatrix<Scalar>& acc) {
  detail::check_args(model, x, y, theta);
  if (model.family.kind == LossFamily::Kind::MulticlassLogistic) {
    const Index p = x.size();
    const auto probs = detail::multiclass_probs<Scalar>(model.family, x, theta).first;
    const Index m = probs.size();
    Matrix<Scalar> upper = Matrix<Scalar>::Zero(acc.dim(), acc.dim());
    for (Index j = 0; j < m; ++j) {
      for (Index k = j; k < m; ++k) {
        const Scalar c =
            weight * ((j == k ? probs(j) : Scalar(0)) - probs(j) * probs(k));
        upper.block(j * p, k * p, p, p) = c * (x * x.transpose());
      }
    }
    acc += SymMatrix<Scalar>::from_upper(upper);
    return;
  }
  const Scalar d2 = detail::scalar_link(model.family, dot(theta, x), y).d2;
  acc.add_rank_one(weight * d2, x);
}

template <typename Scalar, typename DX, typename DT>
Scalar loss(const LossModel<Scalar>& model, const Eigen::MatrixBase<DX>& x, Scalar y,
            const Eigen::MatrixBase<DT>& theta) {
  return data_loss(model, x, y, theta) + model.ridge / Scalar(2) * squared_norm(theta);
}

template <typename Scalar, typename DX, typename DT>
Vector<Scalar> grad(const LossModel<Scalar>& model, const Eigen::MatrixBase<DX>& x, Scalar y,
                    const Eigen::MatrixBase<DT>& theta) {
  Vector<Scalar> g = model.ridge * theta;
  add_data_gradient(model, x, y, theta, Scalar(1), g);
  return g;
}

/// Hessian-vector product without forming the Hessian: c(t) (x^T u) x for
/// scalar-link families, the block analogue for multiclass, plus ridge * u.
template <typename Scalar, typename DX, typename DT, typename DU>
Vector<Scalar> hess_vec(const LossModel<Scalar>& model, const Eigen::MatrixBase<DX>& x, Scalar y,
                        const Eigen::MatrixBase<DT>& theta, const Eigen::MatrixBase<DU>& u) {
  detail::check_args(model, x, y, theta);
  if (u.size() != model.param_dim()) fail(ErrorCode::DimensionMismatch, "hess_vec: direction size");
  Vector<Scalar> out = model.ridge * u;
  const Index p = x.size();
  if (model.family.kind == LossFamily::Kind::MulticlassLogistic) {
    const auto probs = detail::multiclass_probs<Scalar>(model.family, x, theta).first;
    const Index m = probs.size();
    Vector<Scalar> proj(m);
    Scalar mixed(0);
    for (Index k = 0; k < m; ++k) {
      proj(k) = dot(u.segment(k * p, p), x);
      mixed += probs(k) * proj(k);
    }
    for (Index k = 0; k < m; ++k) out.segment(k * p, p) += (probs(k) * (proj(k) - mixed)) * x;
    return out;
  }
  const Scalar d2 = detail::scalar_link(model.family, dot(theta, x), y).d2;
  out += (d2 * dot(x, u)) * x;
  return out;
}

template <typename Scalar, typename DX, typename DT>
SymMatrix<Scalar> hess_full(const LossModel<Scalar>& model, const Eigen::MatrixBase<DX>& x,
                            Scalar y, const Eigen::MatrixBase<DT>& theta) {
  SymMatrix<Scalar> h(model.param_dim());
  add_data_hessian(model, x, y, theta, Scalar(1), h);
  h.add_diagonal(model.ridge);
  return h;
}

// DataPoint conveniences.
template <typename Scalar, typename DT>
Scalar loss(const LossModel<Scalar>& model, const DataPoint<Scalar>& z,
            const Eigen::MatrixBase<DT>& theta) {
  return loss(model, z.x, z.y, theta);
}
template <typename Scalar, typename DT>
Vector<Scalar> grad(const LossModel<Scalar>& model, const DataPoint<Scalar>& z,
                    const Eigen::MatrixBase<DT>& theta) {
  return grad(model, z.x, z.y, theta);
}
template <typename Scalar, typename DT, typename DU>
Vector<Scalar> hess_vec(const LossModel<Scalar>& model, const DataPoint<Scalar>& z,
                        const Eigen::MatrixBase<DT>& theta, const Eigen::MatrixBase<DU>& u) {
  return hess_vec(model, z.x, z.y, theta, u);
}
template <typename Scalar, typename DT>
SymMatrix<Scalar> hess_full(const LossModel<Scalar>& model, const DataPoint<Scalar>& z,
                            const Eigen::MatrixBase<DT>& theta) {
  return hess_full(model, z.x, z.y, theta);
}

/// Pseudo-self-concordance parameter of the loss at this point.
template <typename Scalar, typename DX>
Scalar self_concordance_R(const LossModel<Scalar>& model, const Eigen::MatrixBase<DX>& x) {
  const Scalar xn = norm(x);
  switch (model.family.kind) {
    case LossFamily::Kind::LeastSquares: return Scalar(0);
    case LossFamily::Kind::BinaryLogistic:
    case LossFamily::Kind::Poisson: return xn;
    case LossFamily::Kind::MulticlassLogistic: return Scalar(2) * xn;
  }
  return Scalar(0);
}

template <typename Scalar>
Scalar self_concordance_R(const LossModel<Scalar>& model, const DataPoint<Scalar>& z) {
  return self_concordance_R(model, z.x);
}

inline constexpr double kDefaultPoissonRadius = 5.0;

/// Uniform bound L on ||hess l(z, theta)||_2 over the dataset, ridge included.
/// Poisson curvature is unbounded, so its bound holds only for
/// ||theta||_2 <= poisson_radius.
template <typename Scalar>
Scalar smoothness_L(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                    Scalar poisson_radius = Scalar(kDefaultPoissonRadius)) {
  using std::exp;
  using std::sqrt;
  if (data.size() == 0) fail(ErrorCode::EmptyDataset, "smoothness_L");
  Scalar max_sq(0);
  for (Index i = 0; i < data.size(); ++i) max_sq = std::max(max_sq, squared_norm(data.x(i)));
  Scalar curvature(0);
  switch (model.family.kind) {
    case LossFamily::Kind::LeastSquares: curvature = max_sq; break;
    case LossFamily::Kind::BinaryLogistic: curvature = max_sq / Scalar(4); break;
    case LossFamily::Kind::Poisson: curvature = max_sq * exp(poisson_radius * sqrt(max_sq)); break;
    case LossFamily::Kind::MulticlassLogistic: curvature = max_sq / Scalar(2); break;
  }
  return curvature + model.ridge;
}

}  // namespace inflab
