#pragma once

// Ergodicity diagnostics on simulated paths.

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qgle/model.hpp"
#include "qgle/simulate.hpp"

namespace qgle {

// -- autocovariance ----------------------------------------------------------

/// Row-major time series: one row per sample, one column per component.
using Series = MatrixXd;

Series as_series(const std::vector<double>& scalar);
/// Flat storage with `dim` entries per sample.
Series as_series(const std::vector<double>& flat, int dim);

struct AutocovEstimate {
  std::vector<double> lags;        // lag index times dt
  std::vector<MatrixXd> values;    // C(k) = N^{-1} sum_t x_{t+k} x_t^T (centred)
  std::vector<MatrixXd> error_bar; // batch standard errors
  std::size_t n_samples = 0;
  int n_batches = 0;
  double lag0_asymmetry = 0.0;     // |C(0) - C(0)^T|_max
};

/// Biased estimator with batch standard errors. Throws kSeriesTooShort when
/// the length is below 10 * max_lag.
AutocovEstimate autocovariance(const Series& series, int max_lag, int n_batches = 32,
                               double dt = 1.0);

/// Scalar autocovariance at lags 0..max_lag via FFT (centred, 1/N).
std::vector<double> autocovariance_fft(const std::vector<double>& x, std::size_t max_lag);

struct IntegratedAutocorr {
  double tau = 1.0;     // 1 + 2 sum rho_k, in samples
  std::size_t window = 0;
  double variance = 0.0;
};

/// Initial-positive-sequence estimate of the integrated autocorrelation time.
IntegratedAutocorr integrated_autocorr(const std::vector<double>& x);

// -- Gibbs moments -----------------------------------------------------------

struct MomentZ {
  std::string name;
  double estimate = 0.0;
  double expected = 0.0;
  double std_error = 0.0;
  double z = 0.0;
};

struct GibbsMomentReport {
  std::vector<MomentZ> rows;
  std::size_t n_used = 0;
  double max_abs_z() const;
};

/// E[phi(q)] under the Gibbs q-marginal of a one-dimensional torus model.
double gibbs_q_expectation(const ModelSpec& model, const ScalarField& phi, int points = 4096);

/// z-scores for E[p p^T] = M/beta, E[s s^T] = Q/beta, E[p s^T] = 0 and, on the
/// one-dimensional torus, E[phi(q)] for each q-observable. Standard errors are
/// corrected by the integrated autocorrelation time.
GibbsMomentReport gibbs_moment_test(const Trajectory& trajectory, const ModelSpec& model,
                                    const std::vector<Observable>& q_observables = {},
                                    double burn_in = 0.1);

// -- noise stationarity ------------------------------------------------------

struct NoiseStationarity {
  std::vector<double> lags;
  std::vector<double> deviation;  // |C(tau) - ref(tau)|_max / |Q/beta|_max
  std::vector<double> error_bar;
  double max_deviation = 0.0;
};

/// Compares the empirical E[s(t+tau) s(t)^T] against exp(-G22 tau) Q / beta.
NoiseStationarity noise_stationarity_test(const Series& s_path, const MatrixXd& gamma22,
                                          const MatrixXd& Q, double beta,
                                          const std::vector<int>& lag_steps, double dt,
                                          int n_batches = 32);

/// Model-level entry point; throws kPrecondition for position-dependent
/// coefficients.
NoiseStationarity noise_stationarity_test(const ModelSpec& model, const Series& s_path,
                                          const std::vector<int>& lag_steps, double dt,
                                          int n_batches = 32);

// -- asymptotic variance -----------------------------------------------------

enum class SigmaMethod { kGreenKuboWindow, kBatchMeans };

std::string_view to_string(SigmaMethod method);

struct SigmaParams {
  int n_batches = 32;
  double dt = 1.0;  // sample spacing; sigma2 is per unit time
};

struct SigmaEstimate {
  double sigma2 = 0.0;
  double error_bar = 0.0;
  SigmaMethod method = SigmaMethod::kGreenKuboWindow;
  std::size_t window = 0;  // Green-Kubo lag window
  int n_batches = 0;
};

SigmaEstimate clt_sigma(const std::vector<double>& series, SigmaMethod method,
                        const SigmaParams& params = {});

// -- convergence rate --------------------------------------------------------

struct EnsembleSeries {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> std_error;
};

/// Pointwise ensemble mean and standard error; all paths share `times`.
EnsembleSeries ensemble_mean(const std::vector<double>& times,
                             const std::vector<std::vector<double>>& paths);

struct RateFit {
  double kappa = 0.0;
  double r2 = 0.0;
  double t_begin = 0.0;
  double t_end = 0.0;
  std::size_t n_points = 0;
};

/// Least-squares fit of log|mean - mu| over the first contiguous run (after
/// t_min) where the signal exceeds three standard errors. Throws kNoSignal if
/// that run has fewer than three points.
RateFit geometric_rate_fit(const EnsembleSeries& series, double mu, double t_min = 0.0);

}  // namespace qgle
