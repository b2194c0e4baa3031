#include "qgle/stats.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <unsupported/Eigen/FFT>

#include "qgle/error.hpp"
#include "qgle/linalg.hpp"

namespace qgle {

Series as_series(const std::vector<double>& scalar) {
  return Eigen::Map<const VectorXd>(scalar.data(), static_cast<Eigen::Index>(scalar.size()));
}

Series as_series(const std::vector<double>& flat, int dim) {
  if (dim < 1 || flat.size() % static_cast<std::size_t>(dim) != 0)
    throw Error(ErrorKind::kDimensionMismatch, "flat series length is not a multiple of dim");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(
      flat.data(), static_cast<Eigen::Index>(flat.size() / static_cast<std::size_t>(dim)), dim);
}

namespace {

// sum_{t} x_{t+k} x_t^T over rows [begin, end), already centred.
MatrixXd lagged_sum(const Series& x, Eigen::Index begin, Eigen::Index end, Eigen::Index k) {
  const Eigen::Index d = x.cols();
  MatrixXd acc = MatrixXd::Zero(d, d);
  if (end - begin <= k) return acc;
  const auto len = end - begin - k;
  acc.noalias() = x.middleRows(begin + k, len).transpose() * x.middleRows(begin, len);
  return acc;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

AutocovEstimate autocovariance(const Series& series, int max_lag, int n_batches, double dt) {
  if (max_lag < 0) throw Error(ErrorKind::kPrecondition, "max_lag must be >= 0");
  if (n_batches < 2) throw Error(ErrorKind::kPrecondition, "need at least two batches");
  const Eigen::Index n = series.rows();
  if (n < 2 || n < 10 * static_cast<Eigen::Index>(max_lag))
    throw Error(ErrorKind::kSeriesTooShort,
                "series of length " + std::to_string(n) + " is shorter than 10 * max_lag");
  const MatrixXd x = series.rowwise() - series.colwise().mean();

  // batches must be longer than the largest lag; fall back to fewer of them
  Eigen::Index batches = n_batches;
  while (batches > 2 && n / batches <= max_lag) --batches;
  const Eigen::Index len = n / batches;

  AutocovEstimate out;
  out.n_samples = static_cast<std::size_t>(n);
  out.n_batches = static_cast<int>(batches);
  for (int k = 0; k <= max_lag; ++k) {
    out.lags.push_back(k * dt);
    out.values.push_back(lagged_sum(x, 0, n, k) / static_cast<double>(n));
    std::vector<MatrixXd> per_batch;
    MatrixXd mean = MatrixXd::Zero(x.cols(), x.cols());
    for (Eigen::Index b = 0; b < batches; ++b) {
      per_batch.push_back(lagged_sum(x, b * len, (b + 1) * len, k) / static_cast<double>(len));
      mean += per_batch.back();
    }
    mean /= static_cast<double>(batches);
    MatrixXd var = MatrixXd::Zero(x.cols(), x.cols());
    for (const MatrixXd& c : per_batch) var += (c - mean).cwiseAbs2();
    var /= static_cast<double>(batches - 1);
    out.error_bar.push_back((var / static_cast<double>(batches)).cwiseSqrt());
  }
  out.lag0_asymmetry = linalg::max_abs(out.values[0] - out.values[0].transpose());
  return out;
}

std::vector<double> autocovariance_fft(const std::vector<double>& x, std::size_t max_lag) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  max_lag = std::min(max_lag, n - 1);
  const double mu = mean_of(x);
  std::size_t size = 1;
  while (size < 2 * n) size <<= 1;
  std::vector<double> padded(size, 0.0);
  for (std::size_t i = 0; i < n; ++i) padded[i] = x[i] - mu;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, padded);
  for (auto& c : spectrum) c = std::norm(c);
  std::vector<double> corr;
  fft.inv(corr, spectrum);
  std::vector<double> out(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) out[k] = corr[k] / static_cast<double>(n);
  return out;
}

IntegratedAutocorr integrated_autocorr(const std::vector<double>& x) {
  IntegratedAutocorr out;
  if (x.size() < 4) throw Error(ErrorKind::kSeriesTooShort, "series needs at least 4 samples");
  const std::vector<double> c = autocovariance_fft(x, x.size() / 2);
  out.variance = c[0];
  if (!(c[0] > 0.0)) return out;
  // Geyer: sum adjacent pairs while they stay positive
  double sum = -c[0];
  std::size_t k = 0;
  for (; 2 * k + 1 < c.size(); ++k) {
    const double pair = c[2 * k] + c[2 * k + 1];
    if (pair <= 0.0) break;
    sum += 2.0 * pair;
  }
  out.window = 2 * k;
  out.tau = std::max(sum / c[0], 1e-12);
  return out;
}

// ---------------------------------------------------------------------------

double GibbsMomentReport::max_abs_z() const {
  double z = 0.0;
  for (const MomentZ& r : rows) z = std::max(z, std::abs(r.z));
  return z;
}

double gibbs_q_expectation(const ModelSpec& model, const ScalarField& phi, int points) {
  if (!model.domain.is_torus() || model.n() != 1)
    throw Error(ErrorKind::kPrecondition, "Gibbs quadrature is available on the 1-D torus only");
  if (!model.force.is_conservative())
    throw Error(ErrorKind::kNonConservative, "Gibbs marginal needs a conservative force");
  std::vector<double> u(static_cast<std::size_t>(points));
  VectorXd q(1);
  double u_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    q(0) = (i + 0.5) / points;
    u[static_cast<std::size_t>(i)] = model.force.potential(q);
    u_min = std::min(u_min, u[static_cast<std::size_t>(i)]);
  }
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < points; ++i) {
    q(0) = (i + 0.5) / points;
    const double w = std::exp(-model.beta * (u[static_cast<std::size_t>(i)] - u_min));
    num += w * phi(q);
    den += w;
  }
  return num / den;
}

namespace {

MomentZ moment_row(std::string name, const std::vector<double>& values, double expected) {
  MomentZ row;
  row.name = std::move(name);
  row.expected = expected;
  row.estimate = mean_of(values);
  const IntegratedAutocorr iat = integrated_autocorr(values);
  row.std_error = std::sqrt(iat.variance * iat.tau / static_cast<double>(values.size()));
  const double gap = row.estimate - row.expected;
  if (row.std_error > 0.0)
    row.z = gap / row.std_error;
  else
    row.z = std::abs(gap) <= 1e-12 * std::max(1.0, std::abs(expected))
                ? 0.0
                : std::copysign(std::numeric_limits<double>::infinity(), gap);
  return row;
}

}  // namespace

GibbsMomentReport gibbs_moment_test(const Trajectory& traj, const ModelSpec& model,
                                    const std::vector<Observable>& q_observables,
                                    double burn_in) {
  if (!model.Q) throw Error(ErrorKind::kPrecondition, "Gibbs moment test needs Q");
  if (!(burn_in >= 0.0 && burn_in < 1.0))
    throw Error(ErrorKind::kPrecondition, "burn-in fraction must lie in [0, 1)");
  const int n = model.n();
  const int m = model.m();
  const auto first = static_cast<std::size_t>(std::ceil(burn_in * static_cast<double>(traj.size())));
  GibbsMomentReport report;
  report.n_used = traj.size() > first ? traj.size() - first : 0;
  if (report.n_used < 4)
    throw Error(ErrorKind::kSeriesTooShort, "too few samples after burn-in");

  const MatrixXd pp = model.mass / model.beta;
  const MatrixXd ss = *model.Q / model.beta;
  std::vector<double> buf(report.n_used);
  auto product = [&](int a, int b) {
    for (std::size_t i = 0; i < report.n_used; ++i)
      buf[i] = traj.value(first + i, a) * traj.value(first + i, b);
    return buf;
  };
  auto label = [](const char* a, int i, const char* b, int j) {
    return std::string(a) + std::to_string(i + 1) + b + std::to_string(j + 1);
  };
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      report.rows.push_back(moment_row(label("p", i, "p", j), product(n + i, n + j), pp(i, j)));
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j)
      report.rows.push_back(
          moment_row(label("s", i, "s", j), product(2 * n + i, 2 * n + j), ss(i, j)));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      report.rows.push_back(moment_row(label("p", i, "s", j), product(n + i, 2 * n + j), 0.0));

  if (!q_observables.empty() && model.domain.is_torus() && n == 1) {
    for (const Observable& obs : q_observables) {
      for (std::size_t i = 0; i < report.n_used; ++i) buf[i] = obs.fn(traj.state(first + i));
      const double expected = gibbs_q_expectation(model, [&](const VectorXd& q) {
        ExtendedState x{q, VectorXd::Zero(n), VectorXd::Zero(m), 0.0};
        return obs.fn(x);
      });
      report.rows.push_back(moment_row(obs.name, buf, expected));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

NoiseStationarity noise_stationarity_test(const Series& s_path, const MatrixXd& gamma22,
                                          const MatrixXd& Q, double beta,
                                          const std::vector<int>& lag_steps, double dt,
                                          int n_batches) {
  if (s_path.cols() != Q.rows() || gamma22.rows() != Q.rows())
    throw Error(ErrorKind::kDimensionMismatch, "noise path does not match Q");
  if (lag_steps.empty()) throw Error(ErrorKind::kPrecondition, "no lags requested");
  const int max_lag = *std::max_element(lag_steps.begin(), lag_steps.end());
  const AutocovEstimate est = autocovariance(s_path, max_lag, n_batches, dt);
  const MatrixXd stationary = Q / beta;
  const double scale = std::max(linalg::max_abs(stationary), 1e-300);
  NoiseStationarity out;
  for (int k : lag_steps) {
    if (k < 0) throw Error(ErrorKind::kPrecondition, "lags must be >= 0");
    const double tau = k * dt;
    const MatrixXd ref = linalg::expm(-gamma22 * tau) * stationary;
    const std::size_t idx = static_cast<std::size_t>(k);
    out.lags.push_back(tau);
    out.deviation.push_back(linalg::max_abs(est.values[idx] - ref) / scale);
    out.error_bar.push_back(linalg::max_abs(est.error_bar[idx]) / scale);
    out.max_deviation = std::max(out.max_deviation, out.deviation.back());
  }
  return out;
}

NoiseStationarity noise_stationarity_test(const ModelSpec& model, const Series& s_path,
                                          const std::vector<int>& lag_steps, double dt,
                                          int n_batches) {
  if (!model.coeffs.is_constant())
    throw Error(ErrorKind::kPrecondition,
                "noise stationarity needs constant coefficients; the random force is not "
                "stationary otherwise");
  const MatrixXd q = model.Q ? *model.Q : solve_fdt_Q(model.coeffs).Q;
  const VectorXd q0 = VectorXd::Zero(model.n());
  return noise_stationarity_test(s_path, model.coeffs.gamma22(q0), q, model.beta, lag_steps, dt,
                                 n_batches);
}

// ---------------------------------------------------------------------------

std::string_view to_string(SigmaMethod method) {
  return method == SigmaMethod::kGreenKuboWindow ? "green_kubo_window" : "batch_means";
}

SigmaEstimate clt_sigma(const std::vector<double>& series, SigmaMethod method,
                        const SigmaParams& params) {
  if (!(params.dt > 0.0)) throw Error(ErrorKind::kPrecondition, "dt must be positive");
  SigmaEstimate out;
  out.method = method;
  const std::size_t n = series.size();
  if (method == SigmaMethod::kGreenKuboWindow) {
    if (n < 16) throw Error(ErrorKind::kSeriesTooShort, "Green-Kubo needs at least 16 samples");
    const IntegratedAutocorr iat = integrated_autocorr(series);
    out.window = iat.window;
    if (!(iat.variance > 0.0)) return out;
    out.sigma2 = std::max(0.0, iat.variance * iat.tau * params.dt);
    // variance of a truncated-window spectral estimate at frequency zero
    out.error_bar =
        out.sigma2 * std::sqrt(2.0 * (2.0 * static_cast<double>(iat.window) + 1.0) /
                               static_cast<double>(n));
    return out;
  }
  const int b = params.n_batches;
  if (b < 2) throw Error(ErrorKind::kPrecondition, "need at least two batches");
  const std::size_t len = n / static_cast<std::size_t>(b);
  if (len < 2) throw Error(ErrorKind::kSeriesTooShort, "series too short for the batch count");
  out.n_batches = b;
  std::vector<double> means(static_cast<std::size_t>(b), 0.0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(b); ++i) {
    for (std::size_t t = 0; t < len; ++t) means[i] += series[i * len + t];
    means[i] /= static_cast<double>(len);
  }
  const double mu = mean_of(means);
  double var = 0.0;
  for (double v : means) var += (v - mu) * (v - mu);
  var /= static_cast<double>(b - 1);
  out.sigma2 = var * static_cast<double>(len) * params.dt;
  out.error_bar = out.sigma2 * std::sqrt(2.0 / static_cast<double>(b - 1));
  return out;
}

// ---------------------------------------------------------------------------

EnsembleSeries ensemble_mean(const std::vector<double>& times,
                             const std::vector<std::vector<double>>& paths) {
  if (paths.size() < 2) throw Error(ErrorKind::kPrecondition, "need at least two paths");
  EnsembleSeries out;
  out.times = times;
  const double count = static_cast<double>(paths.size());
  for (std::size_t t = 0; t < times.size(); ++t) {
    double mu = 0.0;
    for (const auto& p : paths) {
      if (p.size() != times.size())
        throw Error(ErrorKind::kDimensionMismatch, "paths must share the time grid");
      mu += p[t];
    }
    mu /= count;
    double var = 0.0;
    for (const auto& p : paths) var += (p[t] - mu) * (p[t] - mu);
    var /= count - 1.0;
    out.mean.push_back(mu);
    out.std_error.push_back(std::sqrt(var / count));
  }
  return out;
}

RateFit geometric_rate_fit(const EnsembleSeries& s, double mu, double t_min) {
  const std::size_t n = s.times.size();
  if (s.mean.size() != n || s.std_error.size() != n)
    throw Error(ErrorKind::kDimensionMismatch, "ensemble series fields differ in length");
  auto signal = [&](std::size_t i) {
    return std::abs(s.mean[i] - mu) > 3.0 * s.std_error[i] && std::abs(s.mean[i] - mu) > 0.0;
  };
  std::size_t begin = 0;
  while (begin < n && (s.times[begin] < t_min || !signal(begin))) ++begin;
  std::size_t end = begin;
  while (end < n && signal(end)) ++end;
  if (end - begin < 3)
    throw Error(ErrorKind::kNoSignal, "no window where the mean departs from its asymptote");

  const double count = static_cast<double>(end - begin);
  double st = 0.0, sy = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    st += s.times[i];
    sy += std::log(std::abs(s.mean[i] - mu));
  }
  st /= count;
  sy /= count;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double dt = s.times[i] - st;
    const double dy = std::log(std::abs(s.mean[i] - mu)) - sy;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  RateFit fit;
  fit.n_points = end - begin;
  fit.t_begin = s.times[begin];
  fit.t_end = s.times[end - 1];
  if (!(stt > 0.0)) throw Error(ErrorKind::kNoSignal, "fit window has no time extent");
  const double slope = sty / stt;
  fit.kappa = -slope;
  fit.r2 = syy > 0.0 ? (sty * sty) / (stt * syy) : 1.0;
  return fit;
}

}  // namespace qgle
