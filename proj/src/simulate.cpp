#include "qgle/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "qgle/error.hpp"
#include "qgle/linalg.hpp"
#include "qgle/rng.hpp"

namespace qgle {

std::string_view to_string(Scheme scheme) {
  return scheme == Scheme::kEulerMaruyama ? "euler_maruyama" : "semi_exact_splitting";
}

void IntegratorSpec::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorKind::kValidation, "dt must be positive");
  if (n_steps < 0) throw Error(ErrorKind::kValidation, "n_steps must be >= 0");
  if (stride < 1) throw Error(ErrorKind::kValidation, "stride must be >= 1");
  if (!std::isfinite(dt * static_cast<double>(n_steps)))
    throw Error(ErrorKind::kValidation, "dt * n_steps must be finite");
}

void Trajectory::push(const ExtendedState& x) {
  times_.push_back(x.t);
  data_.insert(data_.end(), x.q.data(), x.q.data() + x.q.size());
  data_.insert(data_.end(), x.p.data(), x.p.data() + x.p.size());
  data_.insert(data_.end(), x.s.data(), x.s.data() + x.s.size());
}

ExtendedState Trajectory::state(std::size_t i) const {
  const double* row = data_.data() + i * static_cast<std::size_t>(width());
  ExtendedState x;
  x.q = Eigen::Map<const VectorXd>(row, n_);
  x.p = Eigen::Map<const VectorXd>(row + n_, n_);
  x.s = Eigen::Map<const VectorXd>(row + 2 * n_, m_);
  x.t = times_[i];
  return x;
}

std::vector<double> Trajectory::column(int k, std::size_t from) const {
  std::vector<double> out;
  out.reserve(size() > from ? size() - from : 0);
  for (std::size_t i = from; i < size(); ++i) out.push_back(value(i, k));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_shapes(const ModelSpec& model, const ExtendedState& x, const VectorXd& xi) {
  const int n = model.n();
  const int m = model.m();
  if (x.q.size() != n || x.p.size() != n || x.s.size() != m)
    throw Error(ErrorKind::kDimensionMismatch, "state does not match the model");
  if (xi.size() != n + m)
    throw Error(ErrorKind::kDimensionMismatch,
                "noise vector must have n+m = " + std::to_string(n + m) + " entries");
}

void check_finite(const ExtendedState& x, long step) {
  if (!x.finite())
    throw IntegrationBlowup(step, "non-finite state at step " + std::to_string(step));
}

}  // namespace

void step_euler(const ModelSpec& model, ExtendedState& x, double dt, const VectorXd& xi,
                long step_index) {
  if (!(dt > 0.0)) throw Error(ErrorKind::kPrecondition, "dt must be positive");
  check_shapes(model, x, xi);
  const int n = model.n();
  const int m = model.m();
  const VectorXd v = model.mass.ldlt().solve(x.p);
  VectorXd z(n + m);
  z << v, x.s;
  VectorXd drift = -model.coeffs.gamma(x.q) * z;
  drift.head(n) += model.force(x.q);
  const VectorXd kick = model.coeffs.sigma(x.q) * xi * std::sqrt(dt / model.beta);
  x.q += v * dt;
  model.domain.reduce(x.q);
  x.p += drift.head(n) * dt + kick.head(n);
  x.s += drift.tail(m) * dt + kick.tail(m);
  x.t += dt;
  check_finite(x, step_index);
}

SplittingStepper::SplittingStepper(const ModelSpec& model, double dt) : model_(&model), dt_(dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::kPrecondition, "dt must be positive");
  if (!model.coeffs.is_constant())
    throw Error(ErrorKind::kPrecondition, "splitting requires constant coefficients");
  const int n = model.n();
  const int m = model.m();
  minv_ = model.mass.inverse();
  MatrixXd scale = MatrixXd::Identity(n + m, n + m);
  scale.topLeftCorner(n, n) = minv_;
  const MatrixXd drift = model.coeffs.gamma() * scale;
  const MatrixXd diffusion = model.coeffs.sigma() * model.coeffs.sigma().transpose() / model.beta;
  const linalg::OuDiscretization ou = linalg::discretize_ou(drift, diffusion, dt);
  propagator_ = ou.propagator;
  covariance_ = ou.covariance;
  const linalg::PsdRoot root = linalg::sqrt_psd(covariance_);
  factor_ = root.root;
  clipped_ = root.clipped;
}

void SplittingStepper::step(ExtendedState& x, const VectorXd& xi, long step_index) const {
  const ModelSpec& model = *model_;
  check_shapes(model, x, xi);
  const int n = model.n();
  const int m = model.m();
  const double h = 0.5 * dt_;
  x.p += model.force(x.q) * h;
  x.q += minv_ * x.p * h;
  model.domain.reduce(x.q);
  VectorXd z(n + m);
  z << x.p, x.s;
  z = propagator_ * z + factor_ * xi;
  x.p = z.head(n);
  x.s = z.tail(m);
  x.q += minv_ * x.p * h;
  model.domain.reduce(x.q);
  x.p += model.force(x.q) * h;
  x.t += dt_;
  check_finite(x, step_index);
}

void step_splitting(const ModelSpec& model, ExtendedState& x, double dt, const VectorXd& xi) {
  SplittingStepper(model, dt).step(x, xi);
}

// ---------------------------------------------------------------------------

GibbsSampler::GibbsSampler(const ModelSpec& model, const GibbsInit& options) : model_(&model) {
  if (!model.force.is_conservative())
    throw Error(ErrorKind::kNonConservative, "Gibbs sampling needs a conservative force");
  const int n = model.n();
  const MatrixXd q = model.Q ? *model.Q : solve_fdt_Q(model.coeffs).Q;
  p_factor_ = linalg::sqrt_psd(model.mass / model.beta).root;
  s_factor_ = linalg::sqrt_psd(q / model.beta).root;
  const int points = std::max(16, options.grid_points);
  if (model.domain.is_torus()) {
    const int per_dim =
        n == 1 ? points : std::max(8, static_cast<int>(std::pow(points, 1.0 / n)));
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const VectorXd& q : default_grid(n, false, per_dim)) {
      const double u = model.force.potential(q);
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
    // slack so that the grid minimum bounds the true minimum from below
    u_floor_ = lo - 0.01 * (hi - lo) - 1e-12;
    return;
  }
  if (n != 1)
    throw Error(ErrorKind::kPrecondition,
                "Gibbs position sampling on R^n is implemented for n = 1 only");
  auto u = [&](double q) { return model.force.potential(VectorXd::Constant(1, q)); };
  // widen the window until the density is negligible at both ends
  double half = 1.0;
  double u_min = std::min({u(-half), u(0.0), u(half)});
  for (int it = 0; it < 40; ++it) {
    for (int k = -64; k <= 64; ++k) u_min = std::min(u_min, u(half * k / 64.0));
    const double edge = std::min(u(-half), u(half)) - u_min;
    if (model.beta * edge > 40.0) break;
    half *= 2.0;
  }
  const int table = 8 * points;
  grid_.resize(static_cast<std::size_t>(table));
  cdf_.assign(static_cast<std::size_t>(table), 0.0);
  std::vector<double> dens(static_cast<std::size_t>(table));
  for (int k = 0; k < table; ++k) {
    grid_[static_cast<std::size_t>(k)] = -half + 2.0 * half * k / (table - 1);
    u_min = std::min(u_min, u(grid_[static_cast<std::size_t>(k)]));
  }
  for (int k = 0; k < table; ++k)
    dens[static_cast<std::size_t>(k)] =
        std::exp(-model.beta * (u(grid_[static_cast<std::size_t>(k)]) - u_min));
  for (std::size_t k = 1; k < dens.size(); ++k)
    cdf_[k] = cdf_[k - 1] + 0.5 * (dens[k] + dens[k - 1]) * (grid_[k] - grid_[k - 1]);
  const double total = cdf_.back();
  if (!(total > 0.0) || !std::isfinite(total))
    throw Error(ErrorKind::kNumericalFailure, "Gibbs q-marginal is not normalisable");
  for (double& c : cdf_) c /= total;
}

ExtendedState GibbsSampler::draw(std::uint64_t seed, std::uint64_t index) const {
  const ModelSpec& model = *model_;
  const int n = model.n();
  const int m = model.m();
  NormalStream rng(seed, index, 0, RngStream::kInitial);
  ExtendedState x;
  VectorXd g(n);
  for (int i = 0; i < n; ++i) g(i) = rng.normal();
  x.p = p_factor_ * g;
  VectorXd h(m);
  for (int i = 0; i < m; ++i) h(i) = rng.normal();
  x.s = s_factor_ * h;
  x.q.resize(n);
  if (model.domain.is_torus()) {
    for (long attempt = 0;; ++attempt) {
      if (attempt > 100000000L)
        throw Error(ErrorKind::kNumericalFailure, "Gibbs rejection sampler did not accept");
      for (int i = 0; i < n; ++i) x.q(i) = rng.uniform();
      const double accept = std::exp(-model.beta * (model.force.potential(x.q) - u_floor_));
      if (rng.uniform() < accept) break;
    }
  } else {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const std::size_t k = std::clamp<std::size_t>(
        static_cast<std::size_t>(it - cdf_.begin()), 1, cdf_.size() - 1);
    const double w = (u - cdf_[k - 1]) / std::max(cdf_[k] - cdf_[k - 1], 1e-300);
    x.q(0) = grid_[k - 1] + std::clamp(w, 0.0, 1.0) * (grid_[k] - grid_[k - 1]);
  }
  x.t = 0.0;
  return x;
}

ExtendedState sample_gibbs(const ModelSpec& model, std::uint64_t seed, std::uint64_t index,
                           const GibbsInit& options) {
  return GibbsSampler(model, options).draw(seed, index);
}

void Accumulator::add(double v) {
  ++count;
  const double delta = v - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (v - mean);
}

void Accumulator::merge(const Accumulator& o) {
  if (o.count == 0) return;
  if (count == 0) {
    *this = o;
    return;
  }
  const double total = static_cast<double>(count + o.count);
  const double delta = o.mean - mean;
  mean += delta * static_cast<double>(o.count) / total;
  m2 += o.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(o.count) / total;
  count += o.count;
}

// ---------------------------------------------------------------------------

namespace {

// Draws the per-step increments, or replays them from `noise`.
VectorXd increments(const IntegratorSpec& spec, std::uint64_t traj, long step, int dim,
                    const std::vector<double>* noise) {
  VectorXd xi(dim);
  if (noise) {
    const std::size_t off = static_cast<std::size_t>(step) * static_cast<std::size_t>(dim);
    for (int i = 0; i < dim; ++i) xi(i) = (*noise)[off + static_cast<std::size_t>(i)];
    return xi;
  }
  NormalStream rng(spec.seed, traj, static_cast<std::uint64_t>(step));
  for (int i = 0; i < dim; ++i) xi(i) = rng.normal();
  return xi;
}

SimulationResult run_from(const ModelSpec& model, const IntegratorSpec& spec, ExtendedState x,
                          const std::vector<Observable>& observables,
                          const SimulateOptions& options, const std::vector<double>* noise) {
  spec.validate();
  model.validate();
  const int n = model.n();
  const int m = model.m();
  if (x.q.size() != n || x.p.size() != n || x.s.size() != m)
    throw Error(ErrorKind::kDimensionMismatch, "initial state does not match the model");
  model.domain.reduce(x.q);

  SimulationResult out;
  out.trajectory = Trajectory(n, m);
  Trajectory& traj = out.trajectory;
  traj.meta = {model_fingerprint(model), spec, options.trajectory_index};
  for (const Observable& o : observables) out.accumulators.push_back({o.name});
  if (spec.store_noise)
    traj.noise.emplace().reserve(static_cast<std::size_t>(spec.n_steps) *
                                 static_cast<std::size_t>(n + m));

  std::optional<SplittingStepper> splitting;
  if (spec.scheme == Scheme::kSplitting) {
    splitting.emplace(model, spec.dt);
    if (splitting->clipped())
      traj.warnings.push_back("OU covariance had negative eigenvalues; clipped at zero");
  }

  auto record = [&](const ExtendedState& s) {
    if (options.store_states) traj.push(s);
    for (std::size_t i = 0; i < observables.size(); ++i)
      out.accumulators[i].add(observables[i].fn(s));
  };

  const double t0 = x.t;
  record(x);
  for (long k = 0; k < spec.n_steps; ++k) {
    const VectorXd xi = increments(spec, options.trajectory_index, k, n + m, noise);
    if (traj.noise) traj.noise->insert(traj.noise->end(), xi.data(), xi.data() + xi.size());
    if (splitting)
      splitting->step(x, xi, k);
    else
      step_euler(model, x, spec.dt, xi, k);
    x.t = t0 + static_cast<double>(k + 1) * spec.dt;  // no drift in the time grid
    if ((k + 1) % spec.stride == 0) record(x);
  }
  if (!options.store_states) traj.push(x);
  return out;
}

}  // namespace

SimulationResult simulate(const ModelSpec& model, const IntegratorSpec& integrator,
                          const InitialCondition& initial,
                          const std::vector<Observable>& observables,
                          const SimulateOptions& options) {
  ExtendedState x0 = std::holds_alternative<ExtendedState>(initial)
                         ? std::get<ExtendedState>(initial)
                         : sample_gibbs(model, integrator.seed, options.trajectory_index,
                                        std::get<GibbsInit>(initial));
  return run_from(model, integrator, std::move(x0), observables, options, nullptr);
}

Trajectory replay(const ModelSpec& model, const Trajectory& trajectory) {
  if (!trajectory.noise) throw Error(ErrorKind::kMissingNoise, "trajectory has no stored noise");
  if (trajectory.size() == 0) throw Error(ErrorKind::kPrecondition, "empty trajectory");
  const std::vector<double>& noise = *trajectory.noise;
  IntegratorSpec spec = trajectory.meta.integrator;
  if (noise.size() != static_cast<std::size_t>(spec.n_steps) *
                          static_cast<std::size_t>(model.n() + model.m()))
    throw Error(ErrorKind::kDimensionMismatch, "stored noise does not match the step count");
  SimulateOptions options{trajectory.meta.trajectory_index, true};
  return run_from(model, spec, trajectory.state(0), {}, options, &noise).trajectory;
}

namespace {

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

void run_ensemble(const ModelSpec& model, const IntegratorSpec& integrator,
                  const InitialCondition& initial, const std::vector<Observable>& observables,
                  std::size_t count, bool store_states,
                  const std::function<void(std::size_t, SimulationResult&&)>& sink,
                  unsigned threads) {
  std::optional<GibbsSampler> sampler;
  if (std::holds_alternative<GibbsInit>(initial))
    sampler.emplace(model, std::get<GibbsInit>(initial));
  std::mutex sink_mutex;
  parallel_for(count, threads, [&](std::size_t i) {
    const SimulateOptions options{static_cast<std::uint64_t>(i), store_states};
    ExtendedState x0 = sampler ? sampler->draw(integrator.seed, i) : std::get<ExtendedState>(initial);
    SimulationResult r = run_from(model, integrator, std::move(x0), observables, options, nullptr);
    std::lock_guard<std::mutex> lock(sink_mutex);
    sink(i, std::move(r));
  });
}

// ---------------------------------------------------------------------------

IdeResidual ide_residual_check(const ModelSpec& model, const Trajectory& traj) {
  if (!traj.noise) throw Error(ErrorKind::kMissingNoise, "trajectory has no stored noise");
  const IntegratorSpec& spec = traj.meta.integrator;
  if (spec.scheme != Scheme::kEulerMaruyama || spec.stride != 1)
    throw Error(ErrorKind::kPrecondition, "needs an Euler-Maruyama trajectory with stride 1");
  const int n = model.n();
  const int m = model.m();
  const std::size_t steps = traj.size() - 1;
  if (traj.noise->size() < steps * static_cast<std::size_t>(n + m))
    throw Error(ErrorKind::kDimensionMismatch, "stored noise is shorter than the trajectory");
  const double dt = spec.dt;
  const double noise_scale = std::sqrt(dt / model.beta);
  const MatrixXd i_m = MatrixXd::Identity(m, m);

  // per-step factors of the discrete variation-of-constants formula
  std::vector<MatrixXd> transition(steps);
  std::vector<VectorXd> memory(steps), forcing(steps);
  std::vector<ExtendedState> states(steps + 1);
  for (std::size_t j = 0; j <= steps; ++j) states[j] = traj.state(j);
  for (std::size_t j = 0; j < steps; ++j) {
    const VectorXd& q = states[j].q;
    const VectorXd v = model.mass.ldlt().solve(states[j].p);
    const VectorXd xi =
        Eigen::Map<const VectorXd>(traj.noise->data() + j * static_cast<std::size_t>(n + m), n + m);
    transition[j] = i_m - dt * model.coeffs.gamma22(q);
    memory[j] = -model.coeffs.gamma21(q) * v * dt;
    forcing[j] = model.coeffs.sigma2(q) * xi * noise_scale;
  }

  IdeResidual out;
  for (std::size_t k = 0; k < steps; ++k) {
    // s_k = Phi_{k,0} s_0 + sum_j Phi_{k,j+1} (memory_j + forcing_j)
    VectorXd conv = VectorXd::Zero(m);
    VectorXd eta = VectorXd::Zero(m);
    MatrixXd phi = i_m;
    for (std::size_t j = k; j-- > 0;) {
      conv += phi * memory[j];
      eta += phi * forcing[j];
      phi = phi * transition[j];
    }
    const VectorXd s_rec = phi * states[0].s + conv + eta;
    out.s_residual = std::max(out.s_residual, (s_rec - states[k].s).cwiseAbs().maxCoeff());

    const VectorXd& q = states[k].q;
    const VectorXd v = model.mass.ldlt().solve(states[k].p);
    const VectorXd xi =
        Eigen::Map<const VectorXd>(traj.noise->data() + k * static_cast<std::size_t>(n + m), n + m);
    const VectorXd eta_white = model.coeffs.sigma1(q) * xi * noise_scale;
    const VectorXd p_rec = states[k].p +
                           (model.force(q) - model.coeffs.gamma11(q) * v -
                            model.coeffs.gamma12(q) * s_rec) * dt +
                           eta_white;
    out.p_residual =
        std::max(out.p_residual, (p_rec - states[k + 1].p).cwiseAbs().maxCoeff());
  }
  return out;
}

std::vector<double> noise_process_path(const ModelSpec& model, const IntegratorSpec& spec,
                                       std::uint64_t traj) {
  spec.validate();
  if (!model.coeffs.is_constant())
    throw Error(ErrorKind::kPrecondition,
                "stationary noise requires constant coefficients");
  const int m = model.m();
  const VectorXd q0 = VectorXd::Zero(model.n());
  const MatrixXd q = model.Q ? *model.Q : solve_fdt_Q(model.coeffs).Q;
  const MatrixXd g22 = model.coeffs.gamma22(q0);
  const MatrixXd s2 = model.coeffs.sigma2(q0);
  const linalg::OuDiscretization ou =
      linalg::discretize_ou(g22, s2 * s2.transpose() / model.beta, spec.dt);
  const MatrixXd factor = linalg::sqrt_psd(ou.covariance).root;
  const MatrixXd init = linalg::sqrt_psd(q / model.beta).root;

  VectorXd s(m);
  {
    NormalStream rng(spec.seed, traj, 0, RngStream::kInitial);
    for (int i = 0; i < m; ++i) s(i) = rng.normal();
    s = init * s;
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(spec.n_steps / spec.stride + 1) *
              static_cast<std::size_t>(m));
  out.insert(out.end(), s.data(), s.data() + m);
  VectorXd xi(m);
  for (long k = 0; k < spec.n_steps; ++k) {
    NormalStream rng(spec.seed, traj, static_cast<std::uint64_t>(k));
    for (int i = 0; i < m; ++i) xi(i) = rng.normal();
    s = ou.propagator * s + factor * xi;
    if ((k + 1) % spec.stride == 0) out.insert(out.end(), s.data(), s.data() + m);
  }
  return out;
}

// ---------------------------------------------------------------------------

ScalarPotential scalar_potential(const Expr& u) {
  const Expr du = u.derivative(0);
  return {[u](double q) { return u.eval(std::span<const double>(&q, 1)); },
          [du](double q) { return du.eval(std::span<const double>(&q, 1)); }};
}

double fordkac_energy(const ScalarPotential& u, const FordKacSpectrum& spectrum,
                      const FordKacState& x) {
  double e = 0.5 * x.p * x.p + u.u(x.q);
  for (std::size_t j = 0; j < spectrum.modes.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double k = spectrum.modes[j].k;
    const double mass = k / (spectrum.modes[j].omega * spectrum.modes[j].omega);
    const double stretch = x.bath_q(jj) - x.q;
    e += 0.5 * x.bath_p(jj) * x.bath_p(jj) / mass + 0.5 * k * stretch * stretch;
  }
  return e;
}

FordKacRun fordkac_run(const ScalarPotential& u, const FordKacSpectrum& spectrum,
                       FordKacState x, double dt, double t_end, long stride) {
  spectrum.validate();
  if (!(dt > 0.0) || !(t_end >= 0.0) || stride < 1)
    throw Error(ErrorKind::kValidation, "Ford-Kac run needs dt > 0, T >= 0, stride >= 1");
  const auto m = static_cast<Eigen::Index>(spectrum.modes.size());
  if (x.bath_q.size() != m || x.bath_p.size() != m)
    throw Error(ErrorKind::kDimensionMismatch, "bath state does not match the spectrum");
  VectorXd k(m), inv_mass(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const FordKacMode& mode = spectrum.modes[static_cast<std::size_t>(j)];
    k(j) = mode.k;
    inv_mass(j) = mode.omega * mode.omega / mode.k;
  }
  auto force = [&](const FordKacState& s, double& f, VectorXd& fb) {
    fb = -k.cwiseProduct(s.bath_q - VectorXd::Constant(m, s.q));
    f = -u.du(s.q) - fb.sum();
  };

  FordKacRun run;
  run.initial_energy = fordkac_energy(u, spectrum, x);
  const long steps = std::lround(t_end / dt);
  auto record = [&](double t) {
    run.t.push_back(t);
    run.q.push_back(x.q);
    run.p.push_back(x.p);
    if (!std::isfinite(x.q) || !std::isfinite(x.p))
      throw IntegrationBlowup(std::lround(t / dt), "Ford-Kac state became non-finite");
    const double e = fordkac_energy(u, spectrum, x);
    run.max_rel_energy_drift =
        std::max(run.max_rel_energy_drift,
                 std::abs(e - run.initial_energy) / std::max(std::abs(run.initial_energy), 1e-300));
  };
  record(0.0);
  double f = 0.0;
  VectorXd fb(m);
  force(x, f, fb);
  for (long step = 0; step < steps; ++step) {
    x.p += 0.5 * dt * f;
    x.bath_p += 0.5 * dt * fb;
    x.q += dt * x.p;
    x.bath_q += dt * inv_mass.cwiseProduct(x.bath_p);
    force(x, f, fb);
    x.p += 0.5 * dt * f;
    x.bath_p += 0.5 * dt * fb;
    if ((step + 1) % stride == 0) record(static_cast<double>(step + 1) * dt);
  }
  if (!x.bath_q.allFinite() || !x.bath_p.allFinite())
    throw IntegrationBlowup(steps, "Ford-Kac bath became non-finite");
  run.final_state = std::move(x);
  return run;
}

FordKacRun fordkac_simulate(const ScalarPotential& u, const FordKacSpectrum& spectrum,
                            double beta, double dt, double t_end, std::uint64_t seed, double q0,
                            double p0, std::uint64_t trajectory_index, long stride) {
  spectrum.validate();
  if (!(beta > 0.0)) throw Error(ErrorKind::kValidation, "beta must be positive");
  const auto m = static_cast<Eigen::Index>(spectrum.modes.size());
  FordKacState x{q0, p0, VectorXd(m), VectorXd(m)};
  NormalStream rng(seed, trajectory_index, 1, RngStream::kInitial);
  for (Eigen::Index j = 0; j < m; ++j) {
    const FordKacMode& mode = spectrum.modes[static_cast<std::size_t>(j)];
    const double mass = mode.k / (mode.omega * mode.omega);
    x.bath_q(j) = q0 + rng.normal() / std::sqrt(beta * mode.k);
    x.bath_p(j) = rng.normal() * std::sqrt(mass / beta);
  }
  return fordkac_run(u, spectrum, std::move(x), dt, t_end, stride);
}

namespace {

// Multiple-origin VACF of one stored momentum path.
std::vector<double> vacf(const std::vector<double>& p, std::size_t lags, std::size_t origin_every,
                         std::size_t origins_end) {
  std::vector<double> out(lags, 0.0);
  std::size_t count = 0;
  for (std::size_t t0 = 0; t0 <= origins_end && t0 + lags - 1 < p.size(); t0 += origin_every) {
    for (std::size_t l = 0; l < lags; ++l) out[l] += p[t0] * p[t0 + l];
    ++count;
  }
  for (double& v : out) v /= static_cast<double>(std::max<std::size_t>(count, 1));
  return out;
}

std::vector<double> mean_rows(const std::vector<std::vector<double>>& rows,
                              const std::vector<std::size_t>& pick) {
  std::vector<double> out(rows.front().size(), 0.0);
  for (std::size_t i : pick)
    for (std::size_t l = 0; l < out.size(); ++l) out[l] += rows[i][l];
  for (double& v : out) v /= static_cast<double>(pick.size());
  return out;
}

double max_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double g = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) g = std::max(g, std::abs(a[l] - b[l]));
  return g;
}

}  // namespace

FordKacComparison fordkac_vs_gle(double c, double alpha, const std::vector<int>& m_list,
                                 const Expr& u_expr, double t_end, int n_ensemble,
                                 std::uint64_t seed, const FordKacComparisonOptions& opt) {
  if (m_list.empty()) throw Error(ErrorKind::kPrecondition, "m_list must be nonempty");
  for (std::size_t i = 1; i < m_list.size(); ++i)
    if (m_list[i] <= m_list[i - 1]) throw Error(ErrorKind::kPrecondition, "m_list must increase");
  if (n_ensemble < 2) throw Error(ErrorKind::kPrecondition, "need at least two trajectories");
  if (!(t_end >= 0.0)) throw Error(ErrorKind::kPrecondition, "T must be >= 0");

  FordKacComparison out;
  if (t_end == 0.0) {
    for (int m : m_list) out.rows.push_back({m, 0.0, 0.0, 0.0});
    out.lags = {0.0};
    return out;
  }

  const MarkovianSystem prony = coeffs_from_prony({{c, alpha}});
  ModelSpec gle{Domain::euclidean(1), MatrixXd::Identity(1, 1), opt.beta,
                ForceField::from_potential(u_expr, 1), prony.coeffs, prony.Q};
  const ScalarPotential u = scalar_potential(u_expr);

  const long stride = std::max(1L, std::lround(opt.lag_step / opt.dt));
  const double lag_dt = static_cast<double>(stride) * opt.dt;
  const auto lags = static_cast<std::size_t>(std::lround(t_end / lag_dt)) + 1;
  const auto origin_every =
      static_cast<std::size_t>(std::max(1L, std::lround(opt.origin_step / lag_dt)));
  const std::size_t origins_end = lags - 1;
  for (std::size_t l = 0; l < lags; ++l) out.lags.push_back(static_cast<double>(l) * lag_dt);

  const auto count = static_cast<std::size_t>(n_ensemble);
  const long steps = std::lround(2.0 * t_end / opt.dt);

  // GLE reference ensemble
  std::vector<std::vector<double>> gle_rows(count);
  IntegratorSpec spec;
  spec.scheme = Scheme::kSplitting;
  spec.dt = opt.dt;
  spec.n_steps = steps;
  spec.seed = seed;
  spec.stride = stride;
  run_ensemble(gle, spec, GibbsInit{}, {}, count, true,
               [&](std::size_t i, SimulationResult&& r) {
                 gle_rows[i] = vacf(r.trajectory.column(1), lags, origin_every, origins_end);
               },
               opt.threads);
  std::vector<std::size_t> all(count);
  for (std::size_t i = 0; i < count; ++i) all[i] = i;
  out.gle_vacf = mean_rows(gle_rows, all);

  const GibbsSampler sampler(gle);
  for (std::size_t mi = 0; mi < m_list.size(); ++mi) {
    const FordKacSpectrum spectrum =
        fordkac_spectrum_for_exponential(c, alpha, m_list[mi], opt.omega_max_factor * alpha);
    std::vector<std::vector<double>> rows(count);
    std::vector<double> drift(count, 0.0);
    const std::uint64_t fk_seed = seed ^ (0x9E3779B97F4A7C15ULL * (mi + 1));
    parallel_for(count, opt.threads, [&](std::size_t i) {
      const ExtendedState x0 = sampler.draw(fk_seed, i);
      const FordKacRun run = fordkac_simulate(u, spectrum, opt.beta, opt.dt, 2.0 * t_end, fk_seed,
                                              x0.q(0), x0.p(0), i, stride);
      rows[i] = vacf(run.p, lags, origin_every, origins_end);
      drift[i] = run.max_rel_energy_drift;
    });

    FordKacComparisonRow row;
    row.m = m_list[mi];
    row.metric = max_gap(mean_rows(rows, all), out.gle_vacf);
    row.energy_drift = *std::max_element(drift.begin(), drift.end());

    // bootstrap over trajectories of both ensembles
    std::vector<double> boot;
    std::vector<std::size_t> pick_fk(count), pick_gle(count);
    for (int b = 0; b < opt.bootstrap; ++b) {
      NormalStream rng(seed, static_cast<std::uint64_t>(mi), static_cast<std::uint64_t>(b),
                       RngStream::kBootstrap);
      for (std::size_t i = 0; i < count; ++i) {
        pick_fk[i] = std::min(count - 1, static_cast<std::size_t>(rng.uniform() * count));
        pick_gle[i] = std::min(count - 1, static_cast<std::size_t>(rng.uniform() * count));
      }
      boot.push_back(max_gap(mean_rows(rows, pick_fk), mean_rows(gle_rows, pick_gle)));
    }
    double mean = 0.0;
    for (double v : boot) mean += v;
    mean /= static_cast<double>(boot.size());
    double var = 0.0;
    for (double v : boot) var += (v - mean) * (v - mean);
    row.error_bar = boot.size() > 1 ? std::sqrt(var / static_cast<double>(boot.size() - 1)) : 0.0;
    out.rows.push_back(row);
  }
  if (out.rows.size() >= 2) {
    const FordKacComparisonRow& first = out.rows.front();
    const FordKacComparisonRow& last = out.rows.back();
    out.weak_convergence_ok =
        last.metric <= first.metric + std::hypot(first.error_bar, last.error_bar);
  }
  return out;
}

}  // namespace qgle
