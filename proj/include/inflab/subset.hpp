#pragma once

// Most influential subsets: removing an alpha fraction of the data to move a
// test function h the most, to first order. With per-point scores
// v_i = <grad h, I_n(Z_i)>, the best weighting zeroes the alpha n smallest
// scores, and its value is the superquantile of the scores at level alpha.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "inflab/glm.hpp"
#include "inflab/ihvp.hpp"
#include "inflab/influence.hpp"
#include "inflab/linalg.hpp"

namespace inflab {

namespace detail {

inline void check_level(double alpha, Index n) {
  if (n < 1) fail(ErrorCode::EmptyInput, "superquantile of an empty vector");
  if (!(alpha >= 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in [0, 1)");
}

/// alpha * n, snapped to the nearest integer when within rounding noise of it.
inline double removal_mass(double alpha, Index n) {
  const double m = alpha * static_cast<double>(n);
  const double r = std::round(m);
  return std::abs(m - r) <= 1e-9 * std::max(1.0, m) ? r : m;
}

/// Indices sorted by ascending value, ties by ascending index.
template <typename Scalar>
std::vector<Index> ascending_order(const Vector<Scalar>& v) {
  std::vector<Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v(a) < v(b); });
  return order;
}

}  // namespace detail

/// Discrete superquantile of the empirical measure on v:
///   (1/((1-alpha) n)) sum_{v_i > q} v_i + (F(q) - alpha)/(1 - alpha) q,
/// q the smallest value with F(q) >= alpha. alpha = 0 gives the mean.
template <typename Scalar>
Scalar superquantile(const Vector<Scalar>& v, double alpha) {
  const Index n = v.size();
  detail::check_level(alpha, n);
  std::vector<Scalar> sorted(v.data(), v.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double mass = detail::removal_mass(alpha, n);
  const auto k = static_cast<Index>(std::max(std::ceil(mass) - 1.0, 0.0));
  const Scalar q = sorted[static_cast<std::size_t>(k)];
  const auto last_le = std::upper_bound(sorted.begin(), sorted.end(), q);
  Scalar tail(0);
  for (auto it = last_le; it != sorted.end(); ++it) tail += *it;
  const auto at_or_below = static_cast<double>(last_le - sorted.begin());
  const Scalar keep = Scalar((1.0 - alpha) * static_cast<double>(n));
  // n (F(q) - alpha) = #{v <= q} - alpha n
  return (tail + Scalar(at_or_below - mass) * q) / keep;
}

template <typename Scalar>
struct SuperquantileDual {
  Scalar value;
  Scalar eta;  // minimizing breakpoint (the alpha-quantile)
};

/// min over eta of eta + (1/((1-alpha) n)) sum (v_i - eta)_+. The objective
/// is piecewise linear with kinks at the v_i, so only those are checked;
/// the smallest minimizing breakpoint is returned.
template <typename Scalar>
SuperquantileDual<Scalar> superquantile_dual(const Vector<Scalar>& v, double alpha) {
  using std::abs;
  const Index n = v.size();
  detail::check_level(alpha, n);
  std::vector<Scalar> sorted(v.data(), v.data() + n);
  std::sort(sorted.begin(), sorted.end());
  // suffix[k] = sum of sorted[k..n)
  std::vector<Scalar> suffix(static_cast<std::size_t>(n) + 1, Scalar(0));
  for (Index k = n - 1; k >= 0; --k) {
    suffix[static_cast<std::size_t>(k)] = suffix[static_cast<std::size_t>(k) + 1] + sorted[static_cast<std::size_t>(k)];
  }
  const Scalar scale = Scalar(1) / Scalar((1.0 - alpha) * static_cast<double>(n));
  std::vector<Scalar> objective(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    const Scalar eta = sorted[static_cast<std::size_t>(k)];
    const auto above = std::upper_bound(sorted.begin(), sorted.end(), eta) - sorted.begin();
    const Scalar excess = suffix[static_cast<std::size_t>(above)] - Scalar(n - above) * eta;
    objective[static_cast<std::size_t>(k)] = eta + scale * excess;
  }
  const Scalar best = *std::min_element(objective.begin(), objective.end());
  const Scalar slack = Scalar(1e-12) * (Scalar(1) + abs(best));
  for (Index k = 0; k < n; ++k) {
    if (objective[static_cast<std::size_t>(k)] <= best + slack) {
      return {best, sorted[static_cast<std::size_t>(k)]};
    }
  }
  return {best, sorted.back()};
}

struct FractionalRemoval {
  Index index;
  double kept;  // share of the full weight 1/(1-alpha) the point retains, in (0, 1)
};

template <typename Scalar>
struct SubsetReport {
  Scalar sif_value = Scalar(0);     // superquantile of the scores
  Scalar greedy_value = Scalar(0);  // value of the greedy reweighting
  std::vector<Index> removed_indices;
  Vector<Scalar> scores;
  std::optional<FractionalRemoval> fractional;
  double alpha = 0.0;
};

/// Greedy maximizer over weights 0 <= w_i <= 1/(1-alpha), mean(w) = 1:
/// zero the floor(alpha n) smallest scores (lower index first among ties),
/// give the next one the leftover weight, and full weight to the rest.
template <typename Scalar>
SubsetReport<Scalar> most_influential_subset(const Vector<Scalar>& scores, double alpha) {
  const Index n = scores.size();
  detail::check_level(alpha, n);
  const double mass = detail::removal_mass(alpha, n);
  const auto removed = static_cast<Index>(std::floor(mass));
  const auto order = detail::ascending_order(scores);

  SubsetReport<Scalar> report;
  report.alpha = alpha;
  report.scores = scores;
  report.removed_indices.assign(order.begin(), order.begin() + removed);
  const Scalar full = Scalar(1.0 / (1.0 - alpha));
  Scalar acc(0);
  Index first_full = removed;
  if (mass > static_cast<double>(removed)) {
    const double kept = static_cast<double>(removed + 1) - mass;
    const Index idx = order[static_cast<std::size_t>(removed)];
    report.fractional = FractionalRemoval{idx, kept};
    acc += Scalar(kept) * full * scores(idx);
    first_full = removed + 1;
  }
  for (Index k = first_full; k < n; ++k) acc += full * scores(order[static_cast<std::size_t>(k)]);
  report.greedy_value = acc / Scalar(n);
  report.sif_value = superquantile(scores, alpha);
  return report;
}

/// v_i = -<H^{-1} grad_h, grad l(Z_i, theta)> for all i from a single solve.
template <typename Scalar>
Vector<Scalar> sif_scores(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                          const Vector<Scalar>& theta, const Vector<Scalar>& test_gradient,
                          const SolverConfig<Scalar>& cfg, Scalar damping = Scalar(0)) {
  const GlmHvpOracle<Scalar> oracle(model, data, theta, damping);
  // u = -(H + damping)^{-1} grad_h, so v_i = <u, grad l_i>.
  const Vector<Scalar> u = solve(oracle, test_gradient, cfg).u;
  Vector<Scalar> scores(data.size());
  for (Index i = 0; i < data.size(); ++i) scores(i) = dot(u, grad(model, data.x(i), data.y(i), theta));
  return scores;
}

/// Scores for h(theta) = l(h_point, theta).
template <typename Scalar>
Vector<Scalar> sif_scores(const LossModel<Scalar>& model, const Dataset<Scalar>& data,
                          const Vector<Scalar>& theta, const DataPoint<Scalar>& h_point,
                          const SolverConfig<Scalar>& cfg, Scalar damping = Scalar(0)) {
  return sif_scores(model, data, theta, grad(model, h_point, theta), cfg, damping);
}

template <typename Scalar>
Scalar subset_influence_error(const SubsetReport<Scalar>& empirical,
                              const SubsetReport<Scalar>& population) {
  const Scalar d = empirical.sif_value - population.sif_value;
  return d * d;
}

/// Assumption constants of the subset bound; passed through, unestimated.
struct SubsetBoundParams {
  double m1 = 0.0, m2 = 0.0, m1_prime = 0.0, m2_prime = 0.0;
};

/// C / (1 - alpha)^2 * R^2 p* / (mu* n) * log(max(n, p) / delta).
inline double subset_error_bound(const BoundParams& bp, const SubsetBoundParams& /*constants*/,
                             double alpha, double n) {
  check_bound_params(bp);
  if (!(alpha >= 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in [0, 1)");
  if (!(n >= 1.0)) fail(ErrorCode::InvalidArgument, "bound needs n >= 1");
  const double lead = bp.c / ((1.0 - alpha) * (1.0 - alpha));
  return lead * bp.r * bp.r * bp.p_star / (bp.mu_star * n) * std::log(std::max(n, bp.p) / bp.delta);
}

}  // namespace inflab
