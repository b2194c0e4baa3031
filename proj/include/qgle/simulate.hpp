#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "qgle/kernels.hpp"
#include "qgle/model.hpp"

namespace qgle {

enum class Scheme { kEulerMaruyama, kSplitting };

std::string_view to_string(Scheme scheme);

struct IntegratorSpec {
  Scheme scheme = Scheme::kSplitting;
  double dt = 1e-3;
  long n_steps = 0;
  std::uint64_t seed = 0;
  bool store_noise = false;
  long stride = 1;

  void validate() const;
};

struct TrajectoryMeta {
  std::uint64_t model_hash = 0;
  IntegratorSpec integrator;
  std::uint64_t trajectory_index = 0;
};

/// States are stored flat as rows (q, p, s) every `stride` steps.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(int n, int m) : n_(n), m_(m) {}

  int n() const { return n_; }
  int m() const { return m_; }
  std::size_t size() const { return times_.size(); }
  int width() const { return 2 * n_ + m_; }

  void push(const ExtendedState& x);
  ExtendedState state(std::size_t i) const;
  double t(std::size_t i) const { return times_[i]; }
  const std::vector<double>& times() const { return times_; }
  /// Column k of the (q, p, s) layout.
  double value(std::size_t i, int k) const {
    return data_[i * static_cast<std::size_t>(width()) + static_cast<std::size_t>(k)];
  }
  std::vector<double> column(int k, std::size_t from = 0) const;

  /// Per-step standard normals (n+m per step), when stored.
  std::optional<std::vector<double>> noise;
  TrajectoryMeta meta;
  std::vector<std::string> warnings;

 private:
  int n_ = 0;
  int m_ = 0;
  std::vector<double> times_;
  std::vector<double> data_;
};

// -- steppers ----------------------------------------------------------------

/// Explicit Euler-Maruyama step with pre-step coefficients.
void step_euler(const ModelSpec& model, ExtendedState& x, double dt, const VectorXd& xi,
                long step_index = 0);

/// Strang splitting B(dt/2) A(dt/2) O(dt) A(dt/2) B(dt/2) with the exact
/// Ornstein-Uhlenbeck map for (p, s); operators are cached per dt.
class SplittingStepper {
 public:
  SplittingStepper(const ModelSpec& model, double dt);

  void step(ExtendedState& x, const VectorXd& xi, long step_index = 0) const;

  const MatrixXd& propagator() const { return propagator_; }
  const MatrixXd& covariance() const { return covariance_; }
  const MatrixXd& noise_factor() const { return factor_; }
  bool clipped() const { return clipped_; }

 private:
  const ModelSpec* model_;
  double dt_;
  MatrixXd minv_;
  MatrixXd propagator_;
  MatrixXd covariance_;
  MatrixXd factor_;
  bool clipped_ = false;
};

void step_splitting(const ModelSpec& model, ExtendedState& x, double dt, const VectorXd& xi);

// -- initial conditions and observables -------------------------------------

struct GibbsInit {
  int grid_points = 2048;  // density tabulation for the q marginal
};

using InitialCondition = std::variant<ExtendedState, GibbsInit>;

/// Exact draws from the Gibbs measure; q by rejection on the torus, by a
/// tabulated inverse CDF on the real line (n = 1 only).
class GibbsSampler {
 public:
  explicit GibbsSampler(const ModelSpec& model, const GibbsInit& options = {});
  ExtendedState draw(std::uint64_t seed, std::uint64_t index) const;

 private:
  const ModelSpec* model_;
  MatrixXd p_factor_;
  MatrixXd s_factor_;
  double u_floor_ = 0.0;      // torus rejection bound
  std::vector<double> grid_;  // real line: abscissae
  std::vector<double> cdf_;
};

ExtendedState sample_gibbs(const ModelSpec& model, std::uint64_t seed, std::uint64_t index,
                           const GibbsInit& options = {});

struct Observable {
  std::string name;
  std::function<double(const ExtendedState&)> fn;
};

struct Accumulator {
  std::string name;
  long count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v);
  void merge(const Accumulator& other);
  double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
};

struct SimulationResult {
  Trajectory trajectory;
  std::vector<Accumulator> accumulators;
};

struct SimulateOptions {
  std::uint64_t trajectory_index = 0;
  bool store_states = true;
};

SimulationResult simulate(const ModelSpec& model, const IntegratorSpec& integrator,
                          const InitialCondition& initial,
                          const std::vector<Observable>& observables = {},
                          const SimulateOptions& options = {});

/// Re-runs the trajectory from its first state with the stored increments.
Trajectory replay(const ModelSpec& model, const Trajectory& trajectory);

/// Runs trajectories 0..count-1 on `threads` workers (0 = hardware); `sink`
/// is called under a lock, in completion order.
void run_ensemble(const ModelSpec& model, const IntegratorSpec& integrator,
                  const InitialCondition& initial, const std::vector<Observable>& observables,
                  std::size_t count, bool store_states,
                  const std::function<void(std::size_t, SimulationResult&&)>& sink,
                  unsigned threads = 0);

// -- non-Markovian reconstruction -------------------------------------------

struct IdeResidual {
  double s_residual = 0.0;  // reconstructed s vs simulated s
  double p_residual = 0.0;  // reconstructed p update vs simulated p
  double max() const { return std::max(s_residual, p_residual); }
};

/// Rebuilds s and the p increments from the discrete Duhamel formula with
/// ordered transition products. Needs an Euler trajectory, stride 1, noise.
IdeResidual ide_residual_check(const ModelSpec& model, const Trajectory& trajectory);

/// Stationary path of ds = -G22 s dt + beta^{-1/2} Sigma2 dW (exact OU steps),
/// flattened with m entries per stored step.
std::vector<double> noise_process_path(const ModelSpec& model, const IntegratorSpec& integrator,
                                       std::uint64_t trajectory_index = 0);

// -- Ford-Kac heat bath ------------------------------------------------------

struct FordKacState {
  double q = 0.0;
  double p = 0.0;
  VectorXd bath_q;
  VectorXd bath_p;
};

struct ScalarPotential {
  std::function<double(double)> u;
  std::function<double(double)> du;
};

struct FordKacRun {
  std::vector<double> t;
  std::vector<double> q;
  std::vector<double> p;
  double initial_energy = 0.0;
  double max_rel_energy_drift = 0.0;
  FordKacState final_state;
};

/// U and U' of a one-dimensional potential expression.
ScalarPotential scalar_potential(const Expr& u);

double fordkac_energy(const ScalarPotential& u, const FordKacSpectrum& spectrum,
                      const FordKacState& x);

/// Velocity-Verlet on the full Hamiltonian, bath drawn from its conditional
/// Gibbs law given q0.
FordKacRun fordkac_simulate(const ScalarPotential& u, const FordKacSpectrum& spectrum,
                            double beta, double dt, double t_end, std::uint64_t seed, double q0,
                            double p0, std::uint64_t trajectory_index = 0, long stride = 1);

/// Deterministic run from a given full state (no bath sampling).
FordKacRun fordkac_run(const ScalarPotential& u, const FordKacSpectrum& spectrum,
                       FordKacState x, double dt, double t_end, long stride = 1);

struct FordKacComparisonRow {
  int m = 0;
  double metric = 0.0;
  double error_bar = 0.0;  // bootstrap standard error
  double energy_drift = 0.0;  // worst relative drift over the ensemble
};

struct FordKacComparison {
  std::vector<FordKacComparisonRow> rows;
  std::vector<double> lags;
  std::vector<double> gle_vacf;
  double gle_error_bar = 0.0;
  bool weak_convergence_ok = true;  // last metric <= first + combined error
};

struct FordKacComparisonOptions {
  double beta = 1.0;
  double dt = 1e-3;
  double omega_max_factor = 20.0;  // omega_max = factor * alpha
  double lag_step = 0.01;
  double origin_step = 0.1;
  int bootstrap = 200;
  unsigned threads = 0;
};

/// VACF discrepancy between Ford-Kac ensembles of growing bath size and the
/// single-mode Prony GLE at matched beta and U (Gibbs starts on R).
FordKacComparison fordkac_vs_gle(double c, double alpha, const std::vector<int>& m_list,
                                 const Expr& u, double t_end,
                                 int n_ensemble, std::uint64_t seed,
                                 const FordKacComparisonOptions& options = {});

}  // namespace qgle
