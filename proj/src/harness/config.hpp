#pragma once

// Experiment configuration: INI-like text, "[section]" headers and
// "key = value" lines, '#' or ';' comments. Unknown sections or keys are
// errors. The grammar is documented in README.md.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "inflab/ihvp.hpp"
#include "inflab/synthdata.hpp"

namespace inflab::harness {

enum class ExperimentKind { Convergence, Solvers, Subset, Fit, Influence, PredictCost };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& text);

struct DataConfig {
  bool from_csv = false;
  // simulation
  SimKind sim = SimKind::LinearContaminated;
  Index p = 9;
  double contam_prob = 0.1;
  double noise_sd_clean = 1.0;
  double noise_sd_contam = 10.0;
  std::vector<double> theta_true;
  // csv
  std::string path;
  std::string response = "y";
  std::vector<std::string> features;
  LossFamily family = LossFamily::binary_logistic();
  // sizes
  Index n = 200;                // single-dataset experiments; 0 means the whole file
  std::vector<Index> n_grid;    // convergence and subset
  Index population_size = 0;    // 0: 20 x max(n_grid) for simulations, whole file for csv
};

struct PointConfig {
  std::vector<double> x;       // empty: default point
  std::optional<double> y;
};

struct CostConfig {
  double kappa = 1000.0;
  double delta = 1.0;  // initial suboptimality
  double sigma2 = 1.0;
  double n = 1000.0;
  std::vector<double> eps = {1e-6};
  Eigendecay decay;
  std::vector<IhvpMethod> methods = {IhvpMethod::CG, IhvpMethod::SGD, IhvpMethod::SVRG,
                                     IhvpMethod::AccelSVRG};
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Convergence;
  std::uint64_t seed = 0;
  Index repetitions = 0;  // 0: 100 for simulations, 5 for csv data
  unsigned threads = 1;
  std::string output;

  DataConfig data;
  double ridge = -1.0;    // < 0: 1e-3 for the linear simulation, 0.01 otherwise
  double damping = 0.0;

  PointConfig point;       // the point whose influence is measured
  PointConfig test_point;  // h(theta) = loss at this point (influence / predict)

  SolverConfig<double> solver = [] {
    SolverConfig<double> s;
    s.method = IhvpMethod::Exact;
    return s;
  }();
  std::vector<IhvpMethod> methods = {IhvpMethod::Exact, IhvpMethod::CG,  IhvpMethod::SGD,
                                     IhvpMethod::LiSSA, IhvpMethod::SVRG, IhvpMethod::AccelSVRG,
                                     IhvpMethod::Arnoldi};
  std::vector<std::uint64_t> budgets = {1000, 10000, 100000};

  std::vector<double> alphas = {0.05, 0.1, 0.2};
  Index test_points = 3;
  Index list_removed = 10;

  double bound_delta = 0.05;
  CostConfig cost;

  Index effective_repetitions() const { return repetitions > 0 ? repetitions : (data.from_csv ? 5 : 100); }
  double effective_ridge() const {
    if (ridge >= 0.0) return ridge;
    return (!data.from_csv && data.sim == SimKind::LinearContaminated) ? 1e-3 : 0.01;
  }
};

/// Cross-field checks; parse_config runs them too.
void validate(const ExperimentConfig& cfg);

/// `kind`, when given, replaces [experiment] kind before validation.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>",
                              std::optional<ExperimentKind> kind = {});
ExperimentConfig load_config(const std::string& path, std::optional<ExperimentKind> kind = {});

}  // namespace inflab::harness
