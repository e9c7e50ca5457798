#pragma once

#include <optional>
#include <string>
#include <vector>

#include "harness/config.hpp"
#include "harness/output.hpp"
#include "inflab/glm.hpp"

namespace inflab::harness {

CsvTable run_experiment(const ExperimentConfig& cfg);

/// Columns n,rep,err_sq,bound,seed; per-rep rows, then "mean" and "stderr" rows per n.
CsvTable run_convergence(const ExperimentConfig& cfg);
/// Columns method,budget,rep,oracle_calls,err_sq,predicted_calls,seed.
CsvTable run_solvers(const ExperimentConfig& cfg);
/// Columns n,alpha,h,rep,sif,pop_sif,err_sq,removed,seed.
CsvTable run_subset(const ExperimentConfig& cfg);
/// Columns name,value.
CsvTable run_fit(const ExperimentConfig& cfg);
/// Columns method,quantity,value.
CsvTable run_influence(const ExperimentConfig& cfg);
/// Columns method,kappa,delta,sigma2,n,eps,predicted_calls.
CsvTable run_predict_cost(const ExperimentConfig& cfg);

/// Solver settings whose oracle cost is about `budget` calls.
SolverConfig<double> budget_config(IhvpMethod method, std::uint64_t budget, Index n, Index p,
                                   const SolverConfig<double>& base);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Datasets of an experiment: a population proxy and nested per-repetition samples.
class DataSource {
 public:
  explicit DataSource(const ExperimentConfig& cfg);

  LossModel<double> model() const { return model_; }
  /// Reference sample standing in for the population.
  const Dataset<double>& population() const;
  /// First n points of repetition rep's sample (prefixes are nested in n).
  Dataset<double> sample(Index rep, Index n) const;
  /// Seed that, with the config, replays repetition rep.
  std::uint64_t rep_seed(Index rep) const;
  /// The point whose influence is tracked.
  DataPoint<double> tracked_point() const;
  /// Test points defining h(theta) = loss at the point.
  std::vector<DataPoint<double>> test_points(Index count) const;

 private:
  const ExperimentConfig& cfg_;
  LossModel<double> model_;
  std::optional<Dataset<double>> file_;
  std::optional<Dataset<double>> population_;
  SimSpec sim_spec(std::uint64_t seed, Index n) const;
};

}  // namespace inflab::harness
