#include "harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace inflab::harness {

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Convergence: return "convergence";
    case ExperimentKind::Solvers: return "solvers";
    case ExperimentKind::Subset: return "subset";
    case ExperimentKind::Fit: return "fit";
    case ExperimentKind::Influence: return "influence";
    case ExperimentKind::PredictCost: return "predict-cost";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& text) {
  for (auto k : {ExperimentKind::Convergence, ExperimentKind::Solvers, ExperimentKind::Subset,
                 ExperimentKind::Fit, ExperimentKind::Influence, ExperimentKind::PredictCost}) {
    if (text == to_string(k)) return k;
  }
  fail(ErrorCode::ConfigError, "unknown experiment kind '" + text + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = first + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || s.empty()) fail(ErrorCode::ConfigError, "'" + s + "' is not a number");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    fail(ErrorCode::ConfigError, "'" + s + "' is not a nonnegative integer");
  }
  return v;
}

Index to_index(const std::string& s) { return static_cast<Index>(to_u64(s)); }

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  fail(ErrorCode::ConfigError, "'" + s + "' is not a boolean");
}

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(to_double(item));
  return out;
}

std::vector<IhvpMethod> to_methods(const std::string& s) {
  std::vector<IhvpMethod> out;
  for (const auto& item : split_list(s)) out.push_back(parse_ihvp_method(item));
  if (out.empty()) fail(ErrorCode::ConfigError, "empty method list");
  return out;
}

Eigendecay to_decay(const std::string& s) {
  if (s == "none") return Eigendecay::none();
  const auto colon = s.find(':');
  if (colon != std::string::npos) {
    const std::string kind = s.substr(0, colon);
    const double rate = to_double(s.substr(colon + 1));
    if (kind == "poly" || kind == "polynomial") return Eigendecay::polynomial(rate);
    if (kind == "exp" || kind == "exponential") return Eigendecay::exponential(rate);
  }
  fail(ErrorCode::ConfigError, "decay must be none, poly:<beta> or exp:<nu>, got '" + s + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using SectionTable = std::map<std::string, Setter>;

const std::map<std::string, SectionTable>& grammar() {
  static const std::map<std::string, SectionTable> table = {
      {"experiment",
       {
           {"kind", [](ExperimentConfig& c, const std::string& v) { c.kind = parse_experiment_kind(v); }},
           {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = to_u64(v); }},
           {"repetitions", [](ExperimentConfig& c, const std::string& v) { c.repetitions = to_index(v); }},
           {"threads", [](ExperimentConfig& c, const std::string& v) { c.threads = static_cast<unsigned>(to_u64(v)); }},
           {"output", [](ExperimentConfig& c, const std::string& v) { c.output = v; }},
       }},
      {"data",
       {
           {"source",
            [](ExperimentConfig& c, const std::string& v) {
              if (v != "simulate" && v != "csv") fail(ErrorCode::ConfigError, "source must be simulate or csv");
              c.data.from_csv = v == "csv";
            }},
           {"sim",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "linear") c.data.sim = SimKind::LinearContaminated;
              else if (v == "logistic") c.data.sim = SimKind::LogisticContaminated;
              else fail(ErrorCode::ConfigError, "sim must be linear or logistic");
            }},
           {"p", [](ExperimentConfig& c, const std::string& v) { c.data.p = to_index(v); }},
           {"contam_prob", [](ExperimentConfig& c, const std::string& v) { c.data.contam_prob = to_double(v); }},
           {"noise_sd_clean", [](ExperimentConfig& c, const std::string& v) { c.data.noise_sd_clean = to_double(v); }},
           {"noise_sd_contam", [](ExperimentConfig& c, const std::string& v) { c.data.noise_sd_contam = to_double(v); }},
           {"theta_true", [](ExperimentConfig& c, const std::string& v) { c.data.theta_true = to_doubles(v); }},
           {"path", [](ExperimentConfig& c, const std::string& v) { c.data.path = v; }},
           {"response", [](ExperimentConfig& c, const std::string& v) { c.data.response = v; }},
           {"features", [](ExperimentConfig& c, const std::string& v) { c.data.features = split_list(v); }},
           {"family", [](ExperimentConfig& c, const std::string& v) { c.data.family = parse_loss_family(v); }},
           {"n", [](ExperimentConfig& c, const std::string& v) { c.data.n = to_index(v); }},
           {"n_grid",
            [](ExperimentConfig& c, const std::string& v) {
              c.data.n_grid.clear();
              for (const auto& item : split_list(v)) c.data.n_grid.push_back(to_index(item));
            }},
           {"population_size", [](ExperimentConfig& c, const std::string& v) { c.data.population_size = to_index(v); }},
       }},
      {"model",
       {
           {"ridge", [](ExperimentConfig& c, const std::string& v) { c.ridge = to_double(v); }},
           {"damping", [](ExperimentConfig& c, const std::string& v) { c.damping = to_double(v); }},
       }},
      {"point",
       {
           {"x", [](ExperimentConfig& c, const std::string& v) { c.point.x = to_doubles(v); }},
           {"y", [](ExperimentConfig& c, const std::string& v) { c.point.y = to_double(v); }},
       }},
      {"test_point",
       {
           {"x", [](ExperimentConfig& c, const std::string& v) { c.test_point.x = to_doubles(v); }},
           {"y", [](ExperimentConfig& c, const std::string& v) { c.test_point.y = to_double(v); }},
       }},
      {"solver",
       {
           {"method", [](ExperimentConfig& c, const std::string& v) { c.solver.method = parse_ihvp_method(v); }},
           {"max_iters", [](ExperimentConfig& c, const std::string& v) { c.solver.max_iters = to_index(v); }},
           {"step_size", [](ExperimentConfig& c, const std::string& v) { c.solver.step_size = to_double(v); }},
           {"epoch_len", [](ExperimentConfig& c, const std::string& v) { c.solver.epoch_len = to_index(v); }},
           {"repeats", [](ExperimentConfig& c, const std::string& v) { c.solver.repeats = to_index(v); }},
           {"epochs", [](ExperimentConfig& c, const std::string& v) { c.solver.epochs = to_index(v); }},
           {"rank", [](ExperimentConfig& c, const std::string& v) { c.solver.rank = to_index(v); }},
           {"krylov_dim", [](ExperimentConfig& c, const std::string& v) { c.solver.krylov_dim = to_index(v); }},
           {"seed", [](ExperimentConfig& c, const std::string& v) { c.solver.rng_seed = to_u64(v); }},
           {"tolerance", [](ExperimentConfig& c, const std::string& v) { c.solver.tolerance = to_double(v); }},
           {"initial",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "zero") c.solver.initial = InitialGuess::Zero;
              else if (v == "negative_rhs") c.solver.initial = InitialGuess::NegativeRhs;
              else fail(ErrorCode::ConfigError, "initial must be zero or negative_rhs");
            }},
           {"tail_average", [](ExperimentConfig& c, const std::string& v) { c.solver.tail_average = to_bool(v); }},
           {"catalyst_kappa", [](ExperimentConfig& c, const std::string& v) { c.solver.catalyst_kappa = to_double(v); }},
           {"strong_convexity", [](ExperimentConfig& c, const std::string& v) { c.solver.strong_convexity = to_double(v); }},
           {"inner_epochs", [](ExperimentConfig& c, const std::string& v) { c.solver.inner_epochs = to_index(v); }},
       }},
      {"solvers",
       {
           {"methods", [](ExperimentConfig& c, const std::string& v) { c.methods = to_methods(v); }},
           {"budgets",
            [](ExperimentConfig& c, const std::string& v) {
              c.budgets.clear();
              for (const auto& item : split_list(v)) c.budgets.push_back(to_u64(item));
            }},
       }},
      {"subset",
       {
           {"alpha", [](ExperimentConfig& c, const std::string& v) { c.alphas = to_doubles(v); }},
           {"test_points", [](ExperimentConfig& c, const std::string& v) { c.test_points = to_index(v); }},
           {"list_removed", [](ExperimentConfig& c, const std::string& v) { c.list_removed = to_index(v); }},
       }},
      {"bound",
       {
           {"delta", [](ExperimentConfig& c, const std::string& v) { c.bound_delta = to_double(v); }},
       }},
      {"cost",
       {
           {"kappa", [](ExperimentConfig& c, const std::string& v) { c.cost.kappa = to_double(v); }},
           {"delta", [](ExperimentConfig& c, const std::string& v) { c.cost.delta = to_double(v); }},
           {"sigma2", [](ExperimentConfig& c, const std::string& v) { c.cost.sigma2 = to_double(v); }},
           {"n", [](ExperimentConfig& c, const std::string& v) { c.cost.n = to_double(v); }},
           {"eps", [](ExperimentConfig& c, const std::string& v) { c.cost.eps = to_doubles(v); }},
           {"decay", [](ExperimentConfig& c, const std::string& v) { c.cost.decay = to_decay(v); }},
           {"methods", [](ExperimentConfig& c, const std::string& v) { c.cost.methods = to_methods(v); }},
       }},
  };
  return table;
}

}  // namespace

void validate(const ExperimentConfig& c) {
  const auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::ConfigError, what);
  };
  need(c.threads >= 1, "threads must be >= 1");
  need(c.data.p >= 1, "p must be >= 1");
  need(!c.data.from_csv || !c.data.path.empty(), "csv source needs [data] path");
  for (std::size_t i = 1; i < c.data.n_grid.size(); ++i) {
    need(c.data.n_grid[i - 1] < c.data.n_grid[i], "n_grid must be strictly ascending");
  }
  for (const auto n : c.data.n_grid) need(n >= 2, "n_grid entries must be >= 2");
  const bool grid_kind = c.kind == ExperimentKind::Convergence || c.kind == ExperimentKind::Subset;
  need(!grid_kind || !c.data.n_grid.empty(), "this experiment needs [data] n_grid");
  if (grid_kind && c.data.population_size > 0) {
    need(c.data.population_size > c.data.n_grid.back(), "population_size must exceed every n in n_grid");
  }
  for (const double a : c.alphas) need(a >= 0.0 && a < 1.0, "alpha values must lie in [0, 1)");
  need(c.bound_delta > 0.0 && c.bound_delta < 1.0, "bound delta must lie in (0, 1)");
  need(c.damping >= 0.0, "damping must be nonnegative");
  need(c.solver.step_size >= 0.0, "step_size must be nonnegative");
  need(c.solver.repeats >= 1, "repeats must be >= 1");
  need(c.solver.rank <= c.solver.krylov_dim || c.solver.krylov_dim == 0, "rank must not exceed krylov_dim");
  if (!c.data.theta_true.empty()) need(static_cast<Index>(c.data.theta_true.size()) == c.data.p, "theta_true length must equal p");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source,
                              std::optional<ExperimentKind> kind) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::string section;
  std::map<std::string, std::size_t> seen;
  const auto& table = grammar();
  const auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    const std::string body = trim(comment == std::string::npos ? line : line.substr(0, comment));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') fail(ErrorCode::ConfigError, where() + "malformed section header");
      section = trim(body.substr(1, body.size() - 2));
      if (!table.contains(section)) fail(ErrorCode::ConfigError, where() + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ConfigError, where() + "expected key = value");
    if (section.empty()) fail(ErrorCode::ConfigError, where() + "key outside of any section");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto& keys = table.at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) fail(ErrorCode::ConfigError, where() + "unknown key '" + key + "' in [" + section + "]");
    const std::string full = section + "." + key;
    if (seen.contains(full)) fail(ErrorCode::ConfigError, where() + "duplicate key '" + full + "'");
    seen[full] = line_no;
    try {
      it->second(cfg, value);
    } catch (const Error& e) {
      fail(e.code() == ErrorCode::InvalidArgument ? ErrorCode::ConfigError : e.code(), where() + e.what());
    }
  }
  if (kind) cfg.kind = *kind;
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path, std::optional<ExperimentKind> kind) {
  std::ifstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::IoError, "cannot open config '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_config(buffer.str(), path, kind);
}

}  // namespace inflab::harness
