#include "qgle/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "qgle/error.hpp"
#include "qgle/io.hpp"
#include "qgle/linalg.hpp"
#include "qgle/stats.hpp"

namespace qgle {

using ojson = nlohmann::ordered_json;

namespace {

std::vector<VectorXd> config_grid(const Config& c) {
  return default_grid(c.model.n(), c.model.coeffs.is_constant(), c.analysis.grid_points);
}

bool wanted(const Config& c, const std::string& name) {
  const auto& list = c.analysis.certificates;
  return list.empty() || std::find(list.begin(), list.end(), name) != list.end();
}

bool requested(const Config& c, const std::string& name) {
  const auto& list = c.analysis.certificates;
  return std::find(list.begin(), list.end(), name) != list.end();
}

Certificate failed(CertificateKind kind, const std::string& note) {
  Certificate c;
  c.kind = kind;
  c.satisfied = false;
  c.margin = -1.0;
  c.notes = note;
  return c;
}

Certificate fdt_row(const Config& config, const std::vector<VectorXd>& grid) {
  const ModelSpec& model = config.model;
  if (model.coeffs.is_constant() && !model.Q) return fdt_certificate(model.coeffs, grid);
  if (!model.Q) return failed(CertificateKind::kFdt, "no SPD Q solves the auxiliary block");
  Certificate c;
  c.kind = CertificateKind::kFdt;
  const double tol = 1e-9;
  const double res = verify_fdt(model.coeffs, *model.Q, grid);
  c.matrices["Q"] = *model.Q;
  c.constants["residual"] = res;
  c.constants["grid_points"] = static_cast<double>(grid.size());
  c.margin = tol - res;
  c.satisfied = c.margin > 0.0;
  c.notes = "max FDT residual over the grid";
  return c;
}

Certificate purecolor_row(const Config& config, const std::vector<VectorXd>& grid) {
  Certificate c;
  c.kind = CertificateKind::kFdt;
  if (!config.model.Q) return failed(CertificateKind::kFdt, "no Q available");
  const std::optional<double> res = purecolor_check(config.model.coeffs, *config.model.Q, grid);
  if (!res) {
    c.satisfied = true;
    c.margin = 0.0;
    c.notes = "not applicable: G11 is nonzero";
    return c;
  }
  const double tol = 1e-9;
  c.constants["residual"] = *res;
  c.margin = tol - *res;
  c.satisfied = c.margin > 0.0;
  c.notes = "max |G12 Q + G21^T| over the grid";
  return c;
}

Certificate hormander_row(const Config& config, const std::vector<VectorXd>& grid) {
  const ModelSpec& model = config.model;
  const MatrixXd* h = model.force.linear_part() ? &*model.force.linear_part() : nullptr;
  try {
    if (model.coeffs.is_constant())
      return hormander_const_check(model.coeffs.gamma(), model.coeffs.sigma(), model.n(),
                                   config.analysis.hormander_mode, h);
    // frozen-coefficient check at every grid point; report the worst one
    Certificate worst;
    bool first = true;
    for (const VectorXd& q : grid) {
      Certificate c = hormander_const_check(model.coeffs.gamma(q), model.coeffs.sigma(q),
                                            model.n(), config.analysis.hormander_mode, h);
      if (first || (!c.satisfied && worst.satisfied) || c.margin < worst.margin) worst = c;
      first = false;
    }
    worst.notes += " (worst frozen-coefficient grid point)";
    return worst;
  } catch (const Error& e) {
    return failed(CertificateKind::kHormander, std::string(to_string(e.kind())) + ": " + e.what());
  }
}

Certificate lyapunov_row(const Config& config, const std::vector<VectorXd>& grid) {
  const ModelSpec& model = config.model;
  if (model.domain.is_torus()) {
    if (model.coeffs.is_constant())
      return lyapunov_const_certificate(model, config.analysis.lyapunov_l);
    Certificate c;
    c.kind = CertificateKind::kLyapunovPosdep;
    try {
      const MatrixXd cm = config.analysis.lyapunov_c
                              ? *config.analysis.lyapunov_c
                              : posdep_certificate_search(model.coeffs, grid);
      const PosdepVerification v = posdep_certificate_verify(model.coeffs, cm, grid);
      c.matrices["C"] = cm;
      c.margin = v.margin;
      c.satisfied = v.margin > 0.0;
      c.constants["grid_points"] = static_cast<double>(grid.size());
      c.notes = config.analysis.lyapunov_c ? "supplied C verified on the grid"
                                           : "C found by grid search";
    } catch (const Error& e) {
      return failed(CertificateKind::kLyapunovPosdep,
                    std::string(to_string(e.kind())) + ": " + e.what());
    }
    return c;
  }
  if (!model.coeffs.is_constant())
    return failed(CertificateKind::kLyapunovUnbounded,
                  "unbounded-domain certificate needs constant coefficients");
  if (!model.Q) return failed(CertificateKind::kLyapunovUnbounded, "no Q available");
  try {
    return unbounded_certificate(model.coeffs.gamma(), *model.Q, model.n(), UnboundedParams{});
  } catch (const Error& e) {
    return failed(CertificateKind::kLyapunovUnbounded,
                  std::string(to_string(e.kind())) + ": " + e.what());
  }
}

Certificate growth_row(const Config& config) {
  const ModelSpec& model = config.model;
  if (!model.force.is_conservative())
    return failed(CertificateKind::kPotentialGrowth, "needs a potential");
  GrowthInput in;
  in.n = model.n();
  const ForceField force = model.force;
  in.v = [force](const VectorXd& q) { return force.potential(q); };
  in.grad_v = [force](const VectorXd& q) { return force.gradient(q); };
  in.force = [force](const VectorXd& q) { return force(q); };
  in.radii = {2.0, 4.0, 8.0, 16.0, 32.0, 64.0};
  in.d_grid = {0.05, 0.1, 0.25, 0.5, 1.0, 2.0};
  try {
    return potential_growth_check(in);
  } catch (const Error& e) {
    return failed(CertificateKind::kPotentialGrowth,
                  std::string(to_string(e.kind())) + ": " + e.what());
  }
}

// -- output helpers ----------------------------------------------------------

ojson matrix_json(const MatrixXd& a) {
  ojson rows = ojson::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    ojson row = ojson::array();
    for (Eigen::Index k = 0; k < a.cols(); ++k) row.push_back(a(i, k));
    rows.push_back(row);
  }
  return rows;
}

ojson certificate_json(const CheckRow& row) {
  const Certificate& c = row.certificate;
  ojson j = {{"certificate", row.name},
             {"kind", std::string(to_string(c.kind))},
             {"satisfied", c.satisfied},
             {"margin", c.margin},
             {"notes", c.notes}};
  ojson constants = ojson::object();
  for (const auto& [k, v] : c.constants) constants[k] = v;
  j["constants"] = constants;
  ojson matrices = ojson::object();
  for (const auto& [k, v] : c.matrices) matrices[k] = matrix_json(v);
  j["matrices"] = matrices;
  return j;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

ojson provenance(const Config& c) {
  return {{"seed", c.integrator.seed},
          {"dt", c.integrator.dt},
          {"n_steps", c.integrator.n_steps},
          {"stride", c.integrator.stride},
          {"scheme", std::string(to_string(c.integrator.scheme))},
          {"model_hash", model_fingerprint(c.model)}};
}

std::filesystem::path out_file(const Config& c, const std::string& name) {
  std::filesystem::create_directories(c.output.dir);
  return std::filesystem::path(c.output.dir) / name;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

// -- subcommands -------------------------------------------------------------

int cmd_check(const Config& config, std::ostream& out) {
  const std::vector<CheckRow> rows = run_certificates(config);
  bool ok = true;
  for (const CheckRow& r : rows) ok = ok && r.certificate.satisfied;
  std::ostringstream text;
  if (config.output.format == "json") {
    ojson j = {{"certificates", ojson::array()}, {"all_satisfied", ok}};
    for (const CheckRow& r : rows) j["certificates"].push_back(certificate_json(r));
    text << j.dump(2) << "\n";
  } else {
    text << "certificate,kind,satisfied,margin,notes\r\n";
    for (const CheckRow& r : rows)
      text << r.name << ',' << to_string(r.certificate.kind) << ','
           << (r.certificate.satisfied ? "true" : "false") << ','
           << format_double(r.certificate.margin) << ',' << csv_field(r.certificate.notes)
           << "\r\n";
  }
  out << text.str();
  if (!config.output.dir.empty()) {
    write_text(out_file(config, config.output.format == "json" ? "certificates.json"
                                                               : "certificates.csv"),
               text.str());
    if (config.output.kernel_tau_max > 0.0 && config.model.coeffs.is_constant()) {
      const MemoryKernel kernel = kernel_from_coeffs(config.model.coeffs);
      std::vector<double> taus;
      for (int i = 0; i < config.output.kernel_points; ++i)
        taus.push_back(config.output.kernel_tau_max * i / (config.output.kernel_points - 1));
      std::ostringstream k;
      write_kernel_csv(k, kernel, taus);
      write_text(out_file(config, "kernel.csv"), k.str());
    }
  }
  return ok ? kExitOk : kExitFailed;
}

std::vector<Observable> observables(const Config& c) {
  std::vector<Observable> obs;
  for (const std::string& name : c.analysis.observables) obs.push_back(make_observable(name, c.model));
  return obs;
}

int cmd_simulate(const Config& config, std::ostream& out) {
  const SimulationResult r = simulate(config.model, config.integrator, config.initial,
                                      observables(config), {0, true});
  if (!config.output.dir.empty()) {
    if (config.output.trajectory) {
      std::ostringstream csv;
      write_trajectory_csv(csv, r.trajectory);
      write_text(out_file(config, "trajectory.csv"), csv.str());
    }
    if (r.trajectory.noise) {
      std::ofstream f(out_file(config, "noise.qgln"), std::ios::binary);
      write_noise_sidecar(f, *r.trajectory.noise);
      if (!f) throw Error(ErrorKind::kIo, "cannot write noise sidecar");
    }
  }
  if (config.output.format == "json") {
    ojson j = {{"provenance", provenance(config)}, {"samples", r.trajectory.size()}};
    ojson acc = ojson::array();
    for (const Accumulator& a : r.accumulators)
      acc.push_back({{"name", a.name}, {"count", a.count}, {"mean", a.mean},
                     {"variance", a.variance()}});
    j["observables"] = acc;
    const ExtendedState last = r.trajectory.state(r.trajectory.size() - 1);
    j["final_state"] = {{"t", last.t},
                        {"q", std::vector<double>(last.q.begin(), last.q.end())},
                        {"p", std::vector<double>(last.p.begin(), last.p.end())},
                        {"s", std::vector<double>(last.s.begin(), last.s.end())}};
    j["warnings"] = r.trajectory.warnings;
    out << j.dump(2) << "\n";
  } else {
    out << "observable,count,mean,variance\r\n";
    for (const Accumulator& a : r.accumulators)
      out << csv_field(a.name) << ',' << a.count << ',' << format_double(a.mean) << ','
          << format_double(a.variance()) << "\r\n";
  }
  return kExitOk;
}

bool q_only(const std::string& name) {
  return name == "U" || name.rfind("expr:", 0) == 0 || (name.size() > 1 && name[0] == 'q');
}

int cmd_analyze(const Config& config, std::ostream& out) {
  const ModelSpec& model = config.model;
  ojson report = {{"provenance", provenance(config)}};

  const std::vector<CheckRow> rows = run_certificates(config);
  bool ok = true;
  ojson certs = ojson::array();
  for (const CheckRow& r : rows) {
    ok = ok && r.certificate.satisfied;
    certs.push_back(certificate_json(r));
  }
  report["certificates"] = certs;

  const SimulationResult sim = simulate(model, config.integrator, config.initial, {}, {0, true});
  const Trajectory& traj = sim.trajectory;
  const double sample_dt = config.integrator.dt * static_cast<double>(config.integrator.stride);
  const auto first = static_cast<std::size_t>(
      std::ceil(config.analysis.burn_in * static_cast<double>(traj.size())));
  report["samples"] = traj.size();

  auto error_json = [](const Error& e) {
    return ojson{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}};
  };

  try {
    std::vector<Observable> q_obs;
    for (const std::string& name : config.analysis.observables)
      if (q_only(name)) q_obs.push_back(make_observable(name, model));
    const GibbsMomentReport m = gibbs_moment_test(traj, model, q_obs, config.analysis.burn_in);
    ojson rows_json = ojson::array();
    for (const MomentZ& z : m.rows)
      rows_json.push_back({{"name", z.name}, {"estimate", z.estimate}, {"expected", z.expected},
                           {"std_error", z.std_error}, {"z", z.z}});
    report["moments"] = {{"n_used", m.n_used}, {"max_abs_z", m.max_abs_z()}, {"rows", rows_json}};
  } catch (const Error& e) {
    report["moments"] = error_json(e);
  }

  ojson sigmas = ojson::array();
  for (const std::string& name : config.analysis.observables) {
    const Observable obs = make_observable(name, model);
    std::vector<double> series;
    for (std::size_t i = first; i < traj.size(); ++i) series.push_back(obs.fn(traj.state(i)));
    ojson entry = {{"observable", name}};
    for (SigmaMethod method : {SigmaMethod::kGreenKuboWindow, SigmaMethod::kBatchMeans}) {
      try {
        const SigmaEstimate s = clt_sigma(series, method, {config.analysis.n_batches, sample_dt});
        entry[std::string(to_string(method))] = {{"sigma2", s.sigma2},
                                                 {"std_error", s.error_bar},
                                                 {"window", s.window},
                                                 {"n_batches", s.n_batches}};
      } catch (const Error& e) {
        entry[std::string(to_string(method))] = error_json(e);
      }
    }
    sigmas.push_back(entry);
  }
  report["sigma"] = sigmas;

  if (model.coeffs.is_constant() && model.Q) {
    try {
      const VectorXd q0 = VectorXd::Zero(model.n());
      double max_lag = config.analysis.noise_max_lag;
      if (max_lag == 0.0)
        max_lag = 3.0 / std::max(linalg::min_real_eigenvalue(model.coeffs.gamma22(q0)), 1e-12);
      IntegratorSpec spec = config.integrator;
      const auto lag_count =
          static_cast<int>(std::min<double>(std::floor(max_lag / sample_dt),
                                            static_cast<double>(spec.n_steps / spec.stride) / 10.0));
      std::vector<int> lags;
      const int step = std::max(1, lag_count / 50);
      for (int k = 0; k <= lag_count; k += step) lags.push_back(k);
      const std::vector<double> path = noise_process_path(model, spec);
      const NoiseStationarity ns = noise_stationarity_test(model, as_series(path, model.m()), lags,
                                                           sample_dt, config.analysis.n_batches);
      report["noise_stationarity"] = {{"max_deviation", ns.max_deviation},
                                      {"lags", ns.lags},
                                      {"deviation", ns.deviation},
                                      {"error_bar", ns.error_bar}};
    } catch (const Error& e) {
      report["noise_stationarity"] = error_json(e);
    }
  }

  if (config.analysis.rate) {
    const RateConfig& rc = *config.analysis.rate;
    try {
      const Observable obs = make_observable(rc.observable, model);
      std::vector<std::vector<double>> paths(static_cast<std::size_t>(rc.ensemble));
      std::vector<double> times;
      run_ensemble(model, config.integrator, rc.initial, {}, paths.size(), true,
                   [&](std::size_t i, SimulationResult&& r) {
                     if (times.empty()) times = r.trajectory.times();
                     for (std::size_t k = 0; k < r.trajectory.size(); ++k)
                       paths[i].push_back(obs.fn(r.trajectory.state(k)));
                   },
                   config.analysis.threads);
      const EnsembleSeries es = ensemble_mean(times, paths);
      const std::optional<double> mu = rc.mu ? rc.mu : gibbs_expectation(rc.observable, model);
      if (!mu) throw Error(ErrorKind::kPrecondition, "asymptote mu is unknown; set analysis.rate.mu");
      const RateFit fit = geometric_rate_fit(es, *mu, rc.t_min);
      report["rate"] = {{"observable", rc.observable}, {"mu", *mu},         {"kappa", fit.kappa},
                        {"r2", fit.r2},                {"t_begin", fit.t_begin}, {"t_end", fit.t_end},
                        {"n_points", fit.n_points}};
    } catch (const Error& e) {
      report["rate"] = error_json(e);
    }
  }

  report["warnings"] = traj.warnings;
  const std::string text = report.dump(2) + "\n";
  out << text;
  if (!config.output.dir.empty()) write_text(out_file(config, "report.json"), text);
  return ok ? kExitOk : kExitFailed;
}

int cmd_fordkac(const Config& config, std::ostream& out) {
  const ModelSpec& model = config.model;
  if (config.prony_modes.size() != 1)
    throw Error(ErrorKind::kValidation,
                "coefficients: fordkac needs the prony builder with exactly one mode");
  if (model.n() != 1 || model.domain.is_torus() || !model.force.potential_expr())
    throw Error(ErrorKind::kValidation,
                "model: fordkac needs a one-dimensional euclidean model with a potential");
  const FordKacConfig fc = config.analysis.fordkac.value_or(FordKacConfig{});
  FordKacComparisonOptions opt = fc.options;
  opt.beta = model.beta;
  opt.threads = config.analysis.threads;
  const PronyMode mode = config.prony_modes.front();
  const FordKacComparison cmp =
      fordkac_vs_gle(mode.c, mode.alpha, fc.m_list, *model.force.potential_expr(), fc.t_end,
                     fc.n_ensemble, config.integrator.seed, opt);
  std::ostringstream text;
  if (config.output.format == "json") {
    ojson rows = ojson::array();
    for (const auto& r : cmp.rows)
      rows.push_back({{"m", r.m}, {"metric", r.metric}, {"error_bar", r.error_bar},
                      {"energy_drift", r.energy_drift}});
    ojson j = {{"rows", rows},
               {"weak_convergence_ok", cmp.weak_convergence_ok},
               {"lags", cmp.lags},
               {"gle_vacf", cmp.gle_vacf},
               {"seed", config.integrator.seed},
               {"dt", opt.dt}};
    text << j.dump(2) << "\n";
  } else {
    text << "m,metric,error_bar,energy_drift\r\n";
    for (const auto& r : cmp.rows)
      text << r.m << ',' << format_double(r.metric) << ',' << format_double(r.error_bar) << ','
           << format_double(r.energy_drift) << "\r\n";
  }
  out << text.str();
  if (!config.output.dir.empty())
    write_text(out_file(config, config.output.format == "json" ? "fordkac.json" : "fordkac.csv"),
               text.str());
  return cmp.weak_convergence_ok ? kExitOk : kExitFailed;
}

int cmd_figure_eigs(const Config& config, std::ostream& out) {
  const ModelSpec& model = config.model;
  const std::vector<VectorXd> grid = default_grid(
      model.n(), false, config.analysis.grid_points > 0 ? config.analysis.grid_points : 1001);
  const MatrixXd c = config.analysis.lyapunov_c ? *config.analysis.lyapunov_c
                                                : posdep_certificate_search(model.coeffs, grid);
  const PosdepVerification v = posdep_certificate_verify(model.coeffs, c, grid);
  std::ostringstream text;
  if (config.output.format == "json") {
    ojson rows = ojson::array();
    for (const EigenRow& r : v.table)
      rows.push_back({{"q", std::vector<double>(r.q.begin(), r.q.end())},
                      {"eigenvalues", std::vector<double>(r.eigenvalues.begin(), r.eigenvalues.end())}});
    ojson j = {{"C", matrix_json(c)}, {"min_eigenvalue", v.margin}, {"rows", rows}};
    text << j.dump(2) << "\n";
  } else {
    write_eigs_csv(text, v.table);
  }
  out << text.str();
  if (!config.output.dir.empty())
    write_text(out_file(config, config.output.format == "json" ? "figure_eigs.json"
                                                               : "figure_eigs.csv"),
               text.str());
  return v.margin > 0.0 ? kExitOk : kExitFailed;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse:
    case ErrorKind::kValidation:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

void report_error(std::ostream& err, bool json, const std::string& kind, const std::string& message,
                  const ParseError* pe = nullptr) {
  if (json) {
    ojson j = {{"error", {{"kind", kind}, {"message", message}}}};
    if (pe) {
      j["error"]["line"] = pe->line();
      j["error"]["column"] = pe->column();
    }
    err << j.dump() << "\n";
  } else {
    err << "error (" << kind << "): " << message << "\n";
  }
}

}  // namespace

std::vector<CheckRow> run_certificates(const Config& config) {
  const std::vector<VectorXd> grid = config_grid(config);
  std::vector<CheckRow> rows;
  if (wanted(config, "stability"))
    rows.push_back({"stability", stability_certificate(config.model.coeffs, grid)});
  if (wanted(config, "fdt")) rows.push_back({"fdt", fdt_row(config, grid)});
  if (wanted(config, "purecolor")) rows.push_back({"purecolor", purecolor_row(config, grid)});
  if (wanted(config, "hormander")) rows.push_back({"hormander", hormander_row(config, grid)});
  if (wanted(config, "lyapunov")) rows.push_back({"lyapunov", lyapunov_row(config, grid)});
  if (requested(config, "growth") ||
      (config.analysis.certificates.empty() && !config.model.domain.is_torus()))
    rows.push_back({"growth", growth_row(config)});
  return rows;
}

int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quasi-Markovian generalized Langevin equations: certificates, simulation and "
               "diagnostics",
               "qgle"};
  app.require_subcommand(1);
  std::string config_path, out_dir, format;
  std::uint64_t seed = 0;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"check", "Evaluate ergodicity certificates"},
      {"simulate", "Integrate one trajectory"},
      {"fordkac", "Compare Ford-Kac heat baths with the Prony GLE"},
      {"analyze", "Simulate and run the ergodicity diagnostics"},
      {"figure-eigs", "Eigenvalues of G(q) C + C G(q)^T over the torus"}};
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Configuration file (JSON)")->required();
    seed_opts.push_back(sub->add_option("--seed", seed, "Override integrator.seed"));
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    subs.push_back(sub);
  }

  std::vector<const char*> raw;
  for (const std::string& a : argv) raw.push_back(a.c_str());
  const bool json_errors = std::find(argv.begin(), argv.end(), "json") != argv.end() ||
                           std::find(argv.begin(), argv.end(), "--format=json") != argv.end();
  try {
    app.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, json_errors, "UsageError", e.what());
    err << app.help();
    return kExitUsage;
  }

  const bool json = format == "json";
  std::string text;
  try {
    text = read_file(config_path);
  } catch (const Error& e) {
    report_error(err, json, std::string(to_string(e.kind())), e.what());
    return kExitUsage;
  }
  try {
    Config config = parse_config(text);
    for (CLI::Option* o : seed_opts)
      if (o->count() > 0) {
        config.integrator.seed = seed;
        config.normalized["integrator"]["seed"] = seed;
      }
    if (!out_dir.empty()) config.output.dir = out_dir;
    if (!format.empty()) config.output.format = format;

    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "check") return cmd_check(config, out);
    if (name == "simulate") return cmd_simulate(config, out);
    if (name == "fordkac") return cmd_fordkac(config, out);
    if (name == "analyze") return cmd_analyze(config, out);
    return cmd_figure_eigs(config, out);
  } catch (const ParseError& e) {
    report_error(err, json, std::string(to_string(e.kind())), e.what(), &e);
    return kExitUsage;
  } catch (const Error& e) {
    report_error(err, json, std::string(to_string(e.kind())), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    report_error(err, json, "RuntimeError", e.what());
    return kExitRuntime;
  }
}

}  // namespace qgle
