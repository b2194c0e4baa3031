#pragma once

// JSON run configuration with sections model / coefficients / integrator /
// analysis / output. Unknown and duplicate keys are errors; semantic errors
// carry the dotted key path.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qgle/ergodicity.hpp"
#include "qgle/kernels.hpp"
#include "qgle/model.hpp"
#include "qgle/simulate.hpp"

namespace qgle {

struct RateConfig {
  std::string observable = "energy";
  ExtendedState initial;
  int ensemble = 256;
  std::optional<double> mu;  // defaults to the Gibbs expectation
  double t_min = 0.0;
};

struct FordKacConfig {
  std::vector<int> m_list{16, 64, 256};
  double t_end = 5.0;
  int n_ensemble = 256;
  FordKacComparisonOptions options;
};

struct AnalysisConfig {
  double burn_in = 0.1;
  int n_batches = 32;
  std::vector<std::string> observables;
  std::vector<std::string> certificates;  // empty: all applicable
  HormanderMode hormander_mode = HormanderMode::kII;
  int lyapunov_l = 1;
  std::optional<MatrixXd> lyapunov_c;
  int grid_points = 0;  // 0: default grid
  double noise_max_lag = 0.0;  // 0: three relaxation times of G22
  std::optional<RateConfig> rate;
  std::optional<FordKacConfig> fordkac;
  unsigned threads = 0;
};

struct OutputConfig {
  std::string dir;  // empty: stdout only
  std::string format = "csv";
  bool trajectory = true;
  double kernel_tau_max = 0.0;  // > 0 writes kernel.csv on check
  int kernel_points = 101;
};

struct Config {
  ModelSpec model;
  IntegratorSpec integrator;
  InitialCondition initial;
  AnalysisConfig analysis;
  OutputConfig output;
  std::vector<PronyMode> prony_modes;  // set by the prony builder
  nlohmann::ordered_json normalized;   // defaults filled in
};

/// Throws ParseError (syntax, with line and column) or Error(kValidation)
/// whose message starts with the key path.
Config parse_config(std::string_view text);

/// Re-parsable JSON of the normalized configuration.
std::string serialize_config(const Config& config);

/// Observable names: q<i>, p<i>, s<i>, p<i>p<j>, s<i>s<j>, p<i>s<j>, energy, U,
/// and expr:<expression in q>.
Observable make_observable(std::string_view name, const ModelSpec& model);

/// Gibbs expectation of a named observable where it is known in closed form
/// or by one-dimensional torus quadrature.
std::optional<double> gibbs_expectation(std::string_view name, const ModelSpec& model);

}  // namespace qgle
