#include "harness/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iostream>
#include <mutex>
#include <numeric>
#include <thread>

#include "inflab/influence.hpp"
#include "inflab/mestim.hpp"
#include "inflab/rng.hpp"
#include "inflab/subset.hpp"

namespace inflab::harness {

namespace {

constexpr std::uint64_t kPopulationTag = 0;
constexpr std::uint64_t kTestPointTag = 0xFFFF'FFFFULL;

/// Runs body(i) for i in [0, count) on up to `threads` workers. Results must
/// be written to per-index slots so the merge order does not depend on timing.
template <typename Body>
void parallel_for(Index count, unsigned threads, Body&& body) {
  const auto workers = static_cast<Index>(std::min<Index>(threads, count));
  if (workers <= 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (Index t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (Index i = next++; i < count; i = next++) {
          try {
            body(i);
          } catch (...) {
            const std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = count;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

Dataset<double> rows_of(const Dataset<double>& data, const std::vector<Index>& rows) {
  Dataset<double>::FeatureMatrix x(static_cast<Index>(rows.size()), data.features());
  Vector<double> y(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    x.row(static_cast<Index>(k)) = data.feature_matrix().row(rows[k]);
    y(static_cast<Index>(k)) = data.y(rows[k]);
  }
  return Dataset<double>(std::move(x), std::move(y), data.family());
}

std::vector<Index> permutation(Index n, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  rng::SplitMix64 gen(seed);
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(gen.uniform_index(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (const double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (const double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

SolverConfig<double> exact_config() {
  SolverConfig<double> c;
  c.method = IhvpMethod::Exact;
  return c;
}

SolverConfig<double> seeded(SolverConfig<double> c, std::uint64_t seed) {
  c.rng_seed = seed;
  return c;
}

FitOptions<double> fit_options() {
  FitOptions<double> o;
  o.tol = 1e-10;
  return o;
}

std::string join_indices(const std::vector<Index>& idx, Index limit) {
  std::string out;
  for (Index k = 0; k < std::min<Index>(limit, static_cast<Index>(idx.size())); ++k) {
    if (k) out += ';';
    out += std::to_string(idx[static_cast<std::size_t>(k)]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// DataSource

DataSource::DataSource(const ExperimentConfig& cfg) : cfg_(cfg) {
  if (cfg.data.from_csv) {
    CsvSchema schema;
    schema.feature_columns = cfg.data.features;
    schema.response_column = cfg.data.response;
    schema.family = cfg.data.family;
    auto loaded = load_csv(cfg.data.path, schema);
    if (loaded.dropped > 0) {
      std::cerr << "note: dropped " << loaded.dropped << " rows without a response from " << cfg.data.path << "\n";
    }
    file_.emplace(std::move(loaded.data));
    model_ = LossModel<double>{file_->family(), file_->features(), cfg.effective_ridge()};
    const bool grid_kind = cfg.kind == ExperimentKind::Convergence || cfg.kind == ExperimentKind::Subset;
    if (grid_kind && file_->size() <= cfg.data.n_grid.back()) {
      fail(ErrorCode::ConfigError, "csv file has " + std::to_string(file_->size()) +
                                       " rows; the reference sample must exceed every n in n_grid");
    }
    population_ = *file_;
  } else {
    const auto family = cfg.data.sim == SimKind::LinearContaminated ? LossFamily::least_squares()
                                                                    : LossFamily::binary_logistic();
    model_ = LossModel<double>{family, cfg.data.p, cfg.effective_ridge()};
    if (cfg.kind == ExperimentKind::Convergence || cfg.kind == ExperimentKind::Subset) {
      const Index largest = cfg.data.n_grid.back();
      const Index size = cfg.data.population_size > 0 ? cfg.data.population_size : 20 * largest;
      population_.emplace(simulate(sim_spec(rng::derive(cfg.seed, kPopulationTag), size)));
    }
  }
}

SimSpec DataSource::sim_spec(std::uint64_t seed, Index n) const {
  SimSpec s;
  s.kind = cfg_.data.sim;
  s.n = n;
  s.p = cfg_.data.p;
  if (!cfg_.data.theta_true.empty()) {
    s.theta_true = Eigen::Map<const Vector<double>>(cfg_.data.theta_true.data(), cfg_.data.p);
  }
  s.contam_prob = cfg_.data.contam_prob;
  s.noise_sd_clean = cfg_.data.noise_sd_clean;
  s.noise_sd_contam = cfg_.data.noise_sd_contam;
  s.seed = seed;
  return s;
}

const Dataset<double>& DataSource::population() const {
  if (!population_) fail(ErrorCode::ConfigError, "this experiment has no reference sample");
  return *population_;
}

std::uint64_t DataSource::rep_seed(Index rep) const {
  return rng::derive(cfg_.seed, static_cast<std::uint64_t>(rep) + 1);
}

Dataset<double> DataSource::sample(Index rep, Index n) const {
  if (file_) {
    if (n > file_->size()) fail(ErrorCode::ConfigError, "sample size exceeds the csv file");
    auto order = permutation(file_->size(), rep_seed(rep));
    order.resize(static_cast<std::size_t>(n));
    return rows_of(*file_, order);
  }
  return simulate(sim_spec(rep_seed(rep), n));
}

DataPoint<double> DataSource::tracked_point() const {
  const Index p = model_.features;
  DataPoint<double> z;
  if (!cfg_.point.x.empty()) {
    if (static_cast<Index>(cfg_.point.x.size()) != p) fail(ErrorCode::ConfigError, "[point] x has the wrong length");
    z.x = Eigen::Map<const Vector<double>>(cfg_.point.x.data(), p);
  } else if (file_) {
    return file_->point(0);
  } else {
    z.x = Vector<double>::Ones(p);
  }
  if (cfg_.point.y) {
    z.y = *cfg_.point.y;
  } else if (file_) {
    z.y = model_.family.kind == LossFamily::Kind::BinaryLogistic ||
                  model_.family.kind == LossFamily::Kind::MulticlassLogistic
              ? 1.0
              : 0.0;
  } else {
    // An outlier: far off the regression line, or labelled against the signal.
    const Vector<double> theta =
        cfg_.data.theta_true.empty() ? default_theta(p)
                                     : Vector<double>(Eigen::Map<const Vector<double>>(cfg_.data.theta_true.data(), p));
    const double t = dot(theta, z.x);
    z.y = cfg_.data.sim == SimKind::LinearContaminated ? t + 10.0 : (t >= 0.0 ? -1.0 : 1.0);
  }
  if (!valid_response(model_.family, z.y)) fail(ErrorCode::ConfigError, "[point] y is invalid for the loss family");
  return z;
}

std::vector<DataPoint<double>> DataSource::test_points(Index count) const {
  std::vector<DataPoint<double>> out;
  if (file_) {
    const auto order = permutation(file_->size(), rng::derive(cfg_.seed, kTestPointTag));
    for (Index k = 0; k < std::min(count, file_->size()); ++k) out.push_back(file_->point(order[static_cast<std::size_t>(k)]));
  } else {
    const auto pts = simulate(sim_spec(rng::derive(cfg_.seed, kTestPointTag), std::max<Index>(count, 1)));
    for (Index k = 0; k < count; ++k) out.push_back(pts.point(k));
  }
  if (!cfg_.test_point.x.empty() && !out.empty()) {
    const Index p = model_.features;
    if (static_cast<Index>(cfg_.test_point.x.size()) != p) fail(ErrorCode::ConfigError, "[test_point] x has the wrong length");
    out.front().x = Eigen::Map<const Vector<double>>(cfg_.test_point.x.data(), p);
    if (cfg_.test_point.y) out.front().y = *cfg_.test_point.y;
    if (!valid_response(model_.family, out.front().y)) fail(ErrorCode::ConfigError, "[test_point] y is invalid for the loss family");
  }
  return out;
}

namespace {

/// The one dataset of single-sample experiments: the csv file as is (or a
/// random subset of data.n rows), or a simulation of data.n points.
Dataset<double> single_dataset(const ExperimentConfig& cfg, const DataSource& src) {
  if (cfg.data.from_csv) {
    const auto& all = src.population();
    if (cfg.data.n == 0 || cfg.data.n >= all.size()) return all;
  }
  return src.sample(0, cfg.data.n);
}

}  // namespace

// ---------------------------------------------------------------------------
// Experiments

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) fail(ErrorCode::InvalidArgument, "loglog_slope needs two or more points");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) fail(ErrorCode::InvalidArgument, "loglog_slope needs positive values");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = mean_of(lx), my = mean_of(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

CsvTable run_convergence(const ExperimentConfig& cfg) {
  const DataSource src(cfg);
  const auto model = src.model();
  const auto proxy = make_population_proxy(model, src.population(), fit_options());
  const auto z = src.tracked_point();
  const Vector<double> target =
      influence_empirical(model, proxy.data, proxy.fit.theta, z, exact_config(), cfg.damping).influence;

  const auto& grid = cfg.data.n_grid;
  const Index reps = cfg.effective_repetitions();
  std::vector<std::vector<double>> err(static_cast<std::size_t>(reps), std::vector<double>(grid.size()));
  parallel_for(reps, cfg.threads, [&](Index r) {
    const auto sample = src.sample(r, grid.back());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto sub = sample.prefix(grid[k]);
      const auto fitted = fit(model, sub, proxy.fit.theta, fit_options());
      const auto report = influence_empirical(model, sub, fitted.theta, z,
                                              seeded(cfg.solver, rng::derive(src.rep_seed(r), k)), cfg.damping);
      err[static_cast<std::size_t>(r)][k] = hstar_norm_error(report.influence, target, proxy.hessian);
    }
  });

  std::vector<double> means(grid.size()), errors(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::vector<double> column;
    for (const auto& row : err) column.push_back(row[k]);
    means[k] = mean_of(column);
    errors[k] = stderr_of(column);
  }

  BoundParams bp;
  bp.p = static_cast<double>(model.param_dim());
  bp.delta = cfg.bound_delta;
  bp.mu_star = sym_eigen(proxy.hessian).eigenvalues(model.param_dim() - 1);
  bp.p_star = effective_dimension(proxy.hessian, proxy.gradient_cov);
  double r_sq = 0.0;
  for (Index i = 0; i < proxy.size(); ++i) {
    const double r = self_concordance_R(model, proxy.data.x(i));
    r_sq += r * r;
  }
  bp.r = std::sqrt(r_sq / static_cast<double>(proxy.size()));
  if (bp.r == 0.0) {
    // The bound expression vanishes identically; calibrate its n-dependence instead.
    std::cerr << "note: self-concordance parameter is 0 for this loss; the bound column shows the "
                 "calibrated 1/n shape\n";
    bp.r = 1.0;
  }
  bp.c = 1.0;
  const double shape = influence_error_bound(bp, static_cast<double>(grid.front())).value;
  bp.c = shape > 0.0 ? means.front() / shape : 0.0;

  CsvTable table({"n", "rep", "err_sq", "bound", "seed"});
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double bound = influence_error_bound(bp, static_cast<double>(grid[k])).value;
    for (Index r = 0; r < reps; ++r) {
      table.add_row({cell(grid[k]), cell(r), cell(err[static_cast<std::size_t>(r)][k]), cell(bound), cell(src.rep_seed(r))});
    }
    table.add_row({cell(grid[k]), "mean", cell(means[k]), cell(bound), cell(cfg.seed)});
    table.add_row({cell(grid[k]), "stderr", cell(errors[k]), cell(bound), cell(cfg.seed)});
  }
  return table;
}

SolverConfig<double> budget_config(IhvpMethod method, std::uint64_t budget, Index n, Index p,
                                   const SolverConfig<double>& base) {
  SolverConfig<double> c = base;
  c.method = method;
  c.tolerance = 0.0;
  const auto b = static_cast<Index>(budget);
  switch (method) {
    case IhvpMethod::Exact: break;
    case IhvpMethod::CG: c.max_iters = std::max<Index>(1, b / n); break;
    case IhvpMethod::SGD: c.max_iters = std::max<Index>(1, b); break;
    case IhvpMethod::LiSSA:
      c.epoch_len = std::max<Index>(1, b / std::max<Index>(1, c.repeats));
      break;
    case IhvpMethod::SVRG:
    case IhvpMethod::AccelSVRG: {
      const Index epoch_len = c.epoch_len > 0 ? c.epoch_len : 2 * n;
      c.epochs = std::max<Index>(1, b / (n + 2 * epoch_len));
      c.inner_epochs = 1;
      break;
    }
    case IhvpMethod::Arnoldi:
      c.krylov_dim = std::clamp<Index>(b / n, 1, p);
      c.rank = c.krylov_dim;
      break;
  }
  return c;
}

CsvTable run_solvers(const ExperimentConfig& cfg) {
  const DataSource src(cfg);
  const auto model = src.model();
  const auto data = single_dataset(cfg, src);
  const Index n = data.size();
  const Index p = model.param_dim();
  const auto fitted = fit(model, data, Vector<double>(Vector<double>::Zero(p)), fit_options());
  const GlmHvpOracle<double> oracle(model, data, fitted.theta, cfg.damping);
  const auto z = src.tracked_point();
  const Vector<double> v = grad(model, z, fitted.theta);
  const auto h = materialize(oracle);
  const Vector<double> target = solve_exact(h, v).u;

  const auto cond = condition_numbers(h, oracle.smoothness());
  const double gap = 0.5 * dot(target, h.apply(target));
  const double sigma2 = sgd_noise_sigma2(oracle, h, target);

  const Index reps = cfg.repetitions > 0 ? cfg.repetitions : 1;
  CsvTable table({"method", "budget", "rep", "oracle_calls", "err_sq", "predicted_calls", "seed"});
  for (Index r = 0; r < reps; ++r) {
    const std::uint64_t seed = src.rep_seed(r);
    for (const auto method : cfg.methods) {
      for (const auto budget : cfg.budgets) {
        auto sc = budget_config(method, budget, n, p, cfg.solver);
        sc.rng_seed = seed;
        const auto sol = solve(oracle, v, sc);
        const double e = hstar_norm_error(sol.u, target, h);
        double predicted = static_cast<double>(n * p);  // exact and low-rank without a decay model
        if (method != IhvpMethod::Exact && method != IhvpMethod::Arnoldi) {
          predicted = predict_cost(method, std::max(cond.kappa, 1.0), gap, sigma2, static_cast<double>(n),
                                   std::max(e, 1e-300));
        }
        table.add_row({to_string(method), cell(budget), cell(r), cell(sol.oracle_calls), cell(e),
                       cell(predicted), cell(seed)});
        if (method == IhvpMethod::Exact) break;  // budget-independent
      }
    }
  }
  return table;
}

CsvTable run_subset(const ExperimentConfig& cfg) {
  const DataSource src(cfg);
  const auto model = src.model();
  const auto proxy = make_population_proxy(model, src.population(), fit_options());
  const auto tests = src.test_points(cfg.test_points);
  const auto& grid = cfg.data.n_grid;
  const auto& alphas = cfg.alphas;
  const Index reps = cfg.effective_repetitions();

  std::vector<std::vector<SubsetReport<double>>> population;  // [h][alpha]
  for (const auto& t : tests) {
    const auto scores = sif_scores(model, proxy.data, proxy.fit.theta, t, exact_config(), cfg.damping);
    std::vector<SubsetReport<double>> per_alpha;
    for (const double a : alphas) per_alpha.push_back(most_influential_subset(scores, a));
    population.push_back(std::move(per_alpha));
  }

  struct Cellvals {
    double sif;
    double err;
    std::vector<Index> removed;
  };
  // [rep][n][alpha][h]
  std::vector<std::vector<std::vector<std::vector<Cellvals>>>> out(static_cast<std::size_t>(reps));
  parallel_for(reps, cfg.threads, [&](Index r) {
    const auto sample = src.sample(r, grid.back());
    auto& mine = out[static_cast<std::size_t>(r)];
    mine.assign(grid.size(), std::vector<std::vector<Cellvals>>(alphas.size(), std::vector<Cellvals>(tests.size())));
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto sub = sample.prefix(grid[k]);
      const auto fitted = fit(model, sub, proxy.fit.theta, fit_options());
      for (std::size_t j = 0; j < tests.size(); ++j) {
        const auto scores = sif_scores(model, sub, fitted.theta, tests[j],
                                       seeded(cfg.solver, rng::derive(src.rep_seed(r), k)), cfg.damping);
        for (std::size_t a = 0; a < alphas.size(); ++a) {
          const auto report = most_influential_subset(scores, alphas[a]);
          mine[k][a][j] = {report.sif_value, subset_influence_error(report, population[j][a]),
                           report.removed_indices};
        }
      }
    }
  });

  CsvTable table({"n", "alpha", "h", "rep", "sif", "pop_sif", "err_sq", "removed", "seed"});
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      std::vector<double> errs, sifs;
      for (std::size_t j = 0; j < tests.size(); ++j) {
        for (Index r = 0; r < reps; ++r) {
          const auto& c = out[static_cast<std::size_t>(r)][k][a][j];
          errs.push_back(c.err);
          sifs.push_back(c.sif);
          table.add_row({cell(grid[k]), cell(alphas[a]), cell(static_cast<Index>(j)), cell(r), cell(c.sif),
                         cell(population[j][a].sif_value), cell(c.err), join_indices(c.removed, cfg.list_removed),
                         cell(src.rep_seed(r))});
        }
      }
      table.add_row({cell(grid[k]), cell(alphas[a]), "all", "mean", cell(mean_of(sifs)), "", cell(mean_of(errs)), "",
                     cell(cfg.seed)});
    }
  }
  return table;
}

CsvTable run_fit(const ExperimentConfig& cfg) {
  const DataSource src(cfg);
  const auto model = src.model();
  const auto data = single_dataset(cfg, src);
  const auto result = fit(model, data, Vector<double>(Vector<double>::Zero(model.param_dim())), fit_options());
  CsvTable table({"name", "value"});
  for (Index j = 0; j < result.theta.size(); ++j) table.add_row({"theta_" + std::to_string(j), cell(result.theta(j))});
  table.add_row({"objective", cell(result.objective)});
  table.add_row({"grad_norm", cell(result.grad_norm)});
  table.add_row({"newton_iters", cell(result.newton_iters)});
  table.add_row({"n", cell(data.size())});
  return table;
}

CsvTable run_influence(const ExperimentConfig& cfg) {
  const DataSource src(cfg);
  const auto model = src.model();
  const auto data = single_dataset(cfg, src);
  const auto fitted = fit(model, data, Vector<double>(Vector<double>::Zero(model.param_dim())), fit_options());
  const auto z = src.tracked_point();
  const auto test = src.test_points(1).front();
  const GlmHvpOracle<double> oracle(model, data, fitted.theta, cfg.damping);
  const auto h = materialize(oracle);
  const auto exact = influence_empirical(model, data, fitted.theta, z, exact_config(), cfg.damping);
  const Vector<double> test_grad = grad(model, test, fitted.theta);

  CsvTable table({"method", "quantity", "value"});
  const auto emit = [&](const InfluenceReport<double>& rep) {
    const std::string m = to_string(rep.solution.method);
    for (Index j = 0; j < rep.influence.size(); ++j) table.add_row({m, "influence_" + std::to_string(j), cell(rep.influence(j))});
    table.add_row({m, "oracle_calls", cell(rep.solution.oracle_calls)});
    table.add_row({m, "iterations", cell(rep.solution.iterations)});
    table.add_row({m, "residual_norm", cell(rep.solution.residual_norm)});
    table.add_row({m, "hn_err_sq_vs_exact", cell(hstar_norm_error(rep.influence, exact.influence, h))});
    table.add_row({m, "prediction_influence", cell(dot(test_grad, rep.influence))});
  };
  emit(exact);
  if (cfg.solver.method != IhvpMethod::Exact) {
    emit(influence_empirical(model, data, fitted.theta, z, seeded(cfg.solver, src.rep_seed(0)), cfg.damping));
  }
  return table;
}

CsvTable run_predict_cost(const ExperimentConfig& cfg) {
  const auto& c = cfg.cost;
  CsvTable table({"method", "kappa", "delta", "sigma2", "n", "eps", "predicted_calls"});
  for (const auto method : c.methods) {
    for (const double eps : c.eps) {
      table.add_row({to_string(method), cell(c.kappa), cell(c.delta), cell(c.sigma2), cell(c.n), cell(eps),
                     cell(predict_cost(method, c.kappa, c.delta, c.sigma2, c.n, eps, c.decay))});
    }
  }
  return table;
}

CsvTable run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::Convergence: return run_convergence(cfg);
    case ExperimentKind::Solvers: return run_solvers(cfg);
    case ExperimentKind::Subset: return run_subset(cfg);
    case ExperimentKind::Fit: return run_fit(cfg);
    case ExperimentKind::Influence: return run_influence(cfg);
    case ExperimentKind::PredictCost: return run_predict_cost(cfg);
  }
  fail(ErrorCode::ConfigError, "unknown experiment");
}

}  // namespace inflab::harness
