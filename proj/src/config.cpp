#include "qgle/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "qgle/error.hpp"
#include "qgle/linalg.hpp"
#include "qgle/stats.hpp"

namespace qgle {

using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw Error(ErrorKind::kValidation, path + ": " + message);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// -- syntax ------------------------------------------------------------------

struct Frame {
  bool object = true;
  std::set<std::string> keys;
  std::string key;
  std::size_t index = 0;
};

std::string frame_path(const std::vector<Frame>& stack) {
  std::string path;
  for (std::size_t i = 0; i + 1 < stack.size(); ++i) {
    const Frame& f = stack[i];
    if (f.object)
      path = join(path, f.key);
    else
      path += "[" + std::to_string(f.index) + "]";
  }
  return path;
}

ojson parse_json(std::string_view text) {
  std::vector<Frame> stack;
  auto element_done = [&] {
    if (!stack.empty() && !stack.back().object) ++stack.back().index;
  };
  ojson::parser_callback_t callback = [&](int, nlohmann::json::parse_event_t event,
                                          ojson& parsed) {
    using E = nlohmann::json::parse_event_t;
    switch (event) {
      case E::object_start:
        stack.push_back({true, {}, {}, 0});
        break;
      case E::array_start:
        stack.push_back({false, {}, {}, 0});
        break;
      case E::key: {
        Frame& f = stack.back();
        const std::string key = parsed.get<std::string>();
        f.key = key;
        if (!f.keys.insert(key).second) {
          std::string path = frame_path(stack);
          throw Error(ErrorKind::kValidation, "duplicate key '" + join(path, key) + "'");
        }
        break;
      }
      case E::object_end:
      case E::array_end:
        stack.pop_back();
        element_done();
        break;
      case E::value:
        element_done();
        break;
    }
    return true;
  };
  try {
    return ojson::parse(text.begin(), text.end(), callback);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string what = e.what();
    const auto colon = what.find(": ", what.find("parse error"));
    if (colon != std::string::npos) what = what.substr(colon + 2);
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + what,
                     line, column);
  } catch (const nlohmann::json::out_of_range& e) {
    // Number overflow carries no byte offset; locate the quoted literal instead.
    const std::string what = e.what();
    std::size_t line = 1, column = 1;
    const auto a = what.find('\''), b = what.rfind('\'');
    if (a != std::string::npos && b > a) {
      const std::size_t at = text.find(what.substr(a + 1, b - a - 1));
      for (std::size_t i = 0; at != std::string_view::npos && i < at; ++i) {
        if (text[i] == '\n') {
          ++line;
          column = 1;
        } else {
          ++column;
        }
      }
    }
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": number out of range",
                     line, column);
  }
}

// -- typed access ------------------------------------------------------------

void expect_object(const ojson& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

void allow_keys(const ojson& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  expect_object(j, path);
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      fail(join(path, key), "unknown key");
  }
}

double number(const ojson& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

double number(const ojson& obj, const char* key, const std::string& path, double def) {
  return obj.contains(key) ? number(obj.at(key), join(path, key)) : def;
}

long integer(const ojson& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<long>();
}

long integer(const ojson& obj, const char* key, const std::string& path, long def) {
  return obj.contains(key) ? integer(obj.at(key), join(path, key)) : def;
}

bool boolean(const ojson& obj, const char* key, const std::string& path, bool def) {
  if (!obj.contains(key)) return def;
  if (!obj.at(key).is_boolean()) fail(join(path, key), "expected true or false");
  return obj.at(key).get<bool>();
}

std::string string(const ojson& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

std::string string(const ojson& obj, const char* key, const std::string& path,
                   const std::string& def) {
  return obj.contains(key) ? string(obj.at(key), join(path, key)) : def;
}

const ojson& required(const ojson& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) fail(join(path, key), "required key is missing");
  return obj.at(key);
}

MatrixXd matrix(const ojson& j, const std::string& path, int rows = -1, int cols = -1) {
  if (j.is_number() && rows > 0 && rows == cols)
    return number(j, path) * MatrixXd::Identity(rows, cols);
  if (!j.is_array() || j.empty()) fail(path, "expected a nonempty array of rows");
  const auto r = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array()) fail(path + "[0]", "expected an array");
  const auto c = static_cast<Eigen::Index>(j[0].size());
  MatrixXd a(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    const ojson& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c)
      fail(row_path, "rows must all have " + std::to_string(c) + " entries");
    for (Eigen::Index k = 0; k < c; ++k)
      a(i, k) = number(row[static_cast<std::size_t>(k)],
                       row_path + "[" + std::to_string(k) + "]");
  }
  if ((rows > 0 && a.rows() != rows) || (cols > 0 && a.cols() != cols))
    fail(path, "expected a " + std::to_string(rows) + " x " + std::to_string(cols) + " matrix");
  return a;
}

VectorXd vector(const ojson& j, const std::string& path, int size) {
  if (j.is_number() && size == 1) return VectorXd::Constant(1, number(j, path));
  if (!j.is_array() || static_cast<int>(j.size()) != size)
    fail(path, "expected an array of " + std::to_string(size) + " numbers");
  VectorXd v(size);
  for (int i = 0; i < size; ++i)
    v(i) = number(j[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]");
  return v;
}

Expr expression(const ojson& j, const std::string& path, int n, bool torus) {
  if (j.is_number()) return Expr::constant(number(j, path));
  const std::string text = string(j, path);
  try {
    Expr e = Expr::parse(text, n);
    validate_expr(e, n, torus);
    return e;
  } catch (const ParseError& e) {
    fail(path, "column " + std::to_string(e.column()) + ": " + e.what());
  } catch (const Error& e) {
    fail(path, e.what());
  }
}

// Square matrix whose entries are numbers or expression strings.
std::vector<Expr> expr_matrix(const ojson& j, const std::string& path, int n, bool torus,
                              int& size) {
  if (!j.is_array() || j.empty()) fail(path, "expected a nonempty array of rows");
  size = static_cast<int>(j.size());
  std::vector<Expr> out;
  for (int i = 0; i < size; ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    const ojson& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != size)
      fail(row_path, "matrix must be square with " + std::to_string(size) + " columns");
    for (int k = 0; k < size; ++k)
      out.push_back(expression(row[static_cast<std::size_t>(k)],
                               row_path + "[" + std::to_string(k) + "]", n, torus));
  }
  return out;
}

template <class F>
auto with_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ParseError& e) {
    fail(path, "column " + std::to_string(e.column()) + ": " + e.what());
  } catch (const Error& e) {
    fail(path, e.what());
  }
}

ExtendedState point_state(const ojson& j, const std::string& path, int n, int m) {
  allow_keys(j, path, {"q", "p", "s"});
  ExtendedState x;
  x.q = j.contains("q") ? vector(j.at("q"), join(path, "q"), n) : VectorXd::Zero(n);
  x.p = j.contains("p") ? vector(j.at("p"), join(path, "p"), n) : VectorXd::Zero(n);
  x.s = j.contains("s") ? vector(j.at("s"), join(path, "s"), m) : VectorXd::Zero(m);
  return x;
}

ojson to_json(const MatrixXd& a) {
  ojson rows = ojson::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    ojson row = ojson::array();
    for (Eigen::Index k = 0; k < a.cols(); ++k) row.push_back(a(i, k));
    rows.push_back(row);
  }
  return rows;
}

ojson to_json(const VectorXd& v) {
  ojson out = ojson::array();
  for (double x : v) out.push_back(x);
  return out;
}

ojson to_json(const ExtendedState& x) {
  return ojson{{"q", to_json(x.q)}, {"p", to_json(x.p)}, {"s", to_json(x.s)}};
}

Scheme parse_scheme(const std::string& name, const std::string& path) {
  if (name == "euler_maruyama") return Scheme::kEulerMaruyama;
  if (name == "semi_exact_splitting") return Scheme::kSplitting;
  fail(path, "unknown scheme '" + name + "' (euler_maruyama, semi_exact_splitting)");
}

HormanderMode parse_mode(const std::string& name, const std::string& path) {
  if (name == "i") return HormanderMode::kI;
  if (name == "ii") return HormanderMode::kII;
  if (name == "iii") return HormanderMode::kIII;
  fail(path, "hormander_mode must be one of i, ii, iii");
}

const char* mode_name(HormanderMode mode) {
  return mode == HormanderMode::kI ? "i" : mode == HormanderMode::kII ? "ii" : "iii";
}

const std::set<std::string> kCertificates{"stability", "fdt",      "purecolor",
                                          "hormander", "lyapunov", "growth"};

// -- sections ----------------------------------------------------------------

struct ModelPart {
  Domain domain = Domain::torus(1);
  MatrixXd mass;
  double beta = 1.0;
  ForceField force = ForceField::zero(1);
  ojson normalized;
};

ModelPart parse_model(const ojson& j) {
  const std::string path = "model";
  allow_keys(j, path, {"domain", "n", "mass", "beta", "potential", "force", "linear_part"});
  ModelPart out;
  const std::string domain = string(required(j, "domain", path), "model.domain");
  if (domain != "torus" && domain != "euclidean")
    fail("model.domain", "must be 'torus' or 'euclidean'");
  const long n = integer(j, "n", path, 1);
  if (n < 1 || n > 64) fail("model.n", "must be between 1 and 64");
  const int dim = static_cast<int>(n);
  const bool torus = domain == "torus";
  out.domain = torus ? Domain::torus(dim) : Domain::euclidean(dim);
  out.mass = j.contains("mass") ? matrix(j.at("mass"), "model.mass", dim, dim)
                                : MatrixXd::Identity(dim, dim);
  if (!linalg::is_symmetric(out.mass) || !linalg::is_spd(out.mass))
    fail("model.mass", "must be symmetric positive definite");
  out.beta = number(j, "beta", path, 1.0);
  if (!(out.beta > 0.0)) fail("model.beta", "must be positive");

  out.normalized = {{"domain", domain}, {"n", n}, {"mass", to_json(out.mass)}, {"beta", out.beta}};
  if (j.contains("potential") && j.contains("force"))
    fail(path, "give either 'potential' or 'force', not both");
  if (j.contains("force")) {
    const ojson& f = j.at("force");
    if (!f.is_array() || static_cast<int>(f.size()) != dim)
      fail("model.force", "expected " + std::to_string(dim) + " expressions");
    std::vector<Expr> comps;
    for (int i = 0; i < dim; ++i)
      comps.push_back(expression(f[static_cast<std::size_t>(i)],
                                 "model.force[" + std::to_string(i) + "]", dim, torus));
    out.force = ForceField::from_components(comps);
    out.normalized["force"] = f;
  } else {
    const ojson pot = j.contains("potential") ? j.at("potential") : ojson("0");
    out.force =
        ForceField::from_potential(expression(pot, "model.potential", dim, torus), dim);
    out.normalized["potential"] = pot;
  }
  if (j.contains("linear_part")) {
    MatrixXd h = matrix(j.at("linear_part"), "model.linear_part", dim, dim);
    with_path("model.linear_part", [&] {
      out.force.with_linear_part(h);
      return 0;
    });
    out.normalized["linear_part"] = to_json(h);
  }
  return out;
}

struct CoefficientPart {
  std::optional<CoefficientField> coeffs;
  std::optional<MatrixXd> Q;
  std::vector<PronyMode> modes;
};

CoefficientPart parse_coefficients(const ojson& j, int n, bool torus) {
  const std::string path = "coefficients";
  expect_object(j, path);
  CoefficientPart out;
  const std::string builder = string(j, "builder", path, "");
  if (builder == "prony") {
    allow_keys(j, path, {"builder", "modes", "Q"});
    const ojson& modes = required(j, "modes", path);
    if (!modes.is_array() || modes.empty())
      fail("coefficients.modes", "expected a nonempty array of {c, alpha}");
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const std::string mp = "coefficients.modes[" + std::to_string(i) + "]";
      allow_keys(modes[i], mp, {"c", "alpha"});
      out.modes.push_back({number(required(modes[i], "c", mp), mp + ".c"),
                           number(required(modes[i], "alpha", mp), mp + ".alpha")});
    }
    MarkovianSystem sys =
        with_path("coefficients.modes", [&] { return coeffs_from_prony(out.modes, n); });
    out.coeffs = sys.coeffs;
    out.Q = sys.Q;
  } else if (builder == "example_torus") {
    allow_keys(j, path, {"builder", "sigma22", "Q"});
    if (!torus || n != 1) fail("coefficients.builder", "example_torus needs a 1-D torus model");
    const double s22 = number(j, "sigma22", path, std::sqrt(2.0));
    out.coeffs = example_torus_coefficients(s22);
  } else if (builder == "noneq") {
    allow_keys(j, path, {"builder", "g11_1", "g12_1", "g21_1", "g22_1", "g12_2", "g22_2",
                         "sigma11_2", "sigma22_2", "Q"});
    NoneqBlocks b;
    auto blk = [&](const char* key) { return matrix(required(j, key, path), join(path, key)); };
    b.g11_1 = blk("g11_1");
    b.g12_1 = blk("g12_1");
    b.g21_1 = blk("g21_1");
    b.g22_1 = blk("g22_1");
    b.g12_2 = blk("g12_2");
    b.g22_2 = blk("g22_2");
    b.sigma11_2 = blk("sigma11_2");
    if (j.contains("sigma22_2")) b.sigma22_2 = blk("sigma22_2");
    if (b.g11_1.rows() != n) fail("coefficients.g11_1", "must be n x n");
    out.coeffs = with_path(path, [&] { return noneq_kernels(b).stacked; });
  } else if (builder.empty()) {
    allow_keys(j, path, {"gamma", "sigma", "Q"});
    int size = 0, sigma_size = 0;
    std::vector<Expr> gamma =
        expr_matrix(required(j, "gamma", path), "coefficients.gamma", n, torus, size);
    std::vector<Expr> sigma =
        expr_matrix(required(j, "sigma", path), "coefficients.sigma", n, torus, sigma_size);
    if (sigma_size != size) fail("coefficients.sigma", "must have the same size as gamma");
    if (size <= n) fail("coefficients.gamma", "must be (n+m) x (n+m) with m >= 1");
    out.coeffs = with_path(path, [&] {
      return CoefficientField::position_dependent(n, size - n, gamma, sigma);
    });
  } else {
    fail("coefficients.builder", "unknown builder '" + builder +
                                     "' (prony, example_torus, noneq)");
  }
  if (j.contains("Q")) {
    out.Q = matrix(j.at("Q"), "coefficients.Q", out.coeffs->m(), out.coeffs->m());
    if (!linalg::is_spd(*out.Q)) fail("coefficients.Q", "must be symmetric positive definite");
  } else if (!out.Q) {
    try {
      if (out.coeffs->is_constant()) {
        out.Q = solve_fdt_Q(*out.coeffs).Q;
      } else {
        // Q is constant by construction: take it from the auxiliary block at
        // the origin and let the grid check decide consistency
        const VectorXd q0 = VectorXd::Zero(n);
        const MatrixXd g22 = out.coeffs->gamma22(q0);
        const MatrixXd s2 = out.coeffs->sigma2(q0);
        MatrixXd q = linalg::solve_sylvester(g22, g22.transpose(), s2 * s2.transpose());
        q = 0.5 * (q + q.transpose());
        if (linalg::is_spd(q)) out.Q = q;
      }
    } catch (const Error&) {
      // not an equilibrium model; certificates report the violation
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Config parse_config(std::string_view text) {
  const ojson root = parse_json(text);
  allow_keys(root, "", {"model", "coefficients", "integrator", "analysis", "output"});

  ModelPart mp = parse_model(required(root, "model", ""));
  const int n = mp.domain.dim();
  const bool torus = mp.domain.is_torus();
  CoefficientPart cp = parse_coefficients(required(root, "coefficients", ""), n, torus);
  ModelSpec model{mp.domain, mp.mass, mp.beta, mp.force, *cp.coeffs, cp.Q};
  with_path("model", [&] {
    model.validate();
    return 0;
  });
  const int m = model.m();

  // integrator
  IntegratorSpec integ;
  InitialCondition initial = GibbsInit{};
  ojson integ_norm;
  {
    const std::string path = "integrator";
    const ojson j = root.contains("integrator") ? root.at("integrator") : ojson::object();
    allow_keys(j, path, {"scheme", "dt", "n_steps", "seed", "store_noise", "stride", "initial"});
    const std::string scheme = string(j, "scheme", path, "semi_exact_splitting");
    integ.scheme = parse_scheme(scheme, "integrator.scheme");
    integ.dt = number(j, "dt", path, 1e-3);
    if (!(integ.dt > 0.0) || !std::isfinite(integ.dt)) fail("integrator.dt", "must be positive");
    integ.n_steps = integer(j, "n_steps", path, 1000);
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
        fail("integrator.seed", "expected a nonnegative integer");
      if (j.at("seed").is_number_integer() && j.at("seed").get<long long>() < 0)
        fail("integrator.seed", "expected a nonnegative integer");
      integ.seed = j.at("seed").get<std::uint64_t>();
    }
    integ.store_noise = boolean(j, "store_noise", path, false);
    integ.stride = integer(j, "stride", path, 1);
    with_path(path, [&] {
      integ.validate();
      return 0;
    });
    if (integ.scheme == Scheme::kSplitting && !model.coeffs.is_constant())
      fail("integrator.scheme", "semi_exact_splitting needs constant coefficients");
    ojson init_norm = "gibbs";
    if (j.contains("initial")) {
      const ojson& init = j.at("initial");
      if (init.is_string()) {
        if (init.get<std::string>() != "gibbs")
          fail("integrator.initial", "expected \"gibbs\" or an object {q, p, s}");
      } else {
        ExtendedState x = point_state(init, "integrator.initial", n, m);
        init_norm = to_json(x);
        initial = std::move(x);
      }
    }
    integ_norm = {{"scheme", scheme},       {"dt", integ.dt},
                  {"n_steps", integ.n_steps}, {"seed", integ.seed},
                  {"store_noise", integ.store_noise}, {"stride", integ.stride},
                  {"initial", init_norm}};
  }

  // analysis
  AnalysisConfig an;
  ojson an_norm;
  {
    const std::string path = "analysis";
    const ojson j = root.contains("analysis") ? root.at("analysis") : ojson::object();
    allow_keys(j, path, {"burn_in", "n_batches", "observables", "certificates", "hormander_mode",
                         "lyapunov_l", "lyapunov_C", "grid_points", "noise_max_lag", "rate",
                         "fordkac", "threads"});
    an.burn_in = number(j, "burn_in", path, 0.1);
    if (!(an.burn_in >= 0.0 && an.burn_in < 1.0)) fail("analysis.burn_in", "must lie in [0, 1)");
    an.n_batches = static_cast<int>(integer(j, "n_batches", path, 32));
    if (an.n_batches < 2) fail("analysis.n_batches", "must be >= 2");
    if (j.contains("observables")) {
      const ojson& obs = j.at("observables");
      if (!obs.is_array()) fail("analysis.observables", "expected an array of names");
      for (std::size_t i = 0; i < obs.size(); ++i) {
        const std::string op = "analysis.observables[" + std::to_string(i) + "]";
        const std::string name = string(obs[i], op);
        with_path(op, [&] { return make_observable(name, model); });
        an.observables.push_back(name);
      }
    }
    if (j.contains("certificates")) {
      const ojson& certs = j.at("certificates");
      if (!certs.is_array()) fail("analysis.certificates", "expected an array of names");
      for (std::size_t i = 0; i < certs.size(); ++i) {
        const std::string cpath = "analysis.certificates[" + std::to_string(i) + "]";
        const std::string name = string(certs[i], cpath);
        if (!kCertificates.count(name)) fail(cpath, "unknown certificate '" + name + "'");
        an.certificates.push_back(name);
      }
    }
    an.hormander_mode =
        parse_mode(string(j, "hormander_mode", path, "ii"), "analysis.hormander_mode");
    an.lyapunov_l = static_cast<int>(integer(j, "lyapunov_l", path, 1));
    if (an.lyapunov_l < 1) fail("analysis.lyapunov_l", "must be >= 1");
    if (j.contains("lyapunov_C")) {
      an.lyapunov_c = matrix(j.at("lyapunov_C"), "analysis.lyapunov_C", n + m, n + m);
      if (!linalg::is_symmetric(*an.lyapunov_c, 1e-12) || !linalg::is_spd(*an.lyapunov_c))
        fail("analysis.lyapunov_C", "must be symmetric positive definite");
    }
    an.grid_points = static_cast<int>(integer(j, "grid_points", path, 0));
    if (an.grid_points < 0 || an.grid_points == 1)
      fail("analysis.grid_points", "must be 0 (default) or >= 2");
    an.noise_max_lag = number(j, "noise_max_lag", path, 0.0);
    if (an.noise_max_lag < 0.0) fail("analysis.noise_max_lag", "must be >= 0");
    const long threads = integer(j, "threads", path, 0);
    if (threads < 0) fail("analysis.threads", "must be >= 0");
    an.threads = static_cast<unsigned>(threads);

    an_norm = {{"burn_in", an.burn_in},
               {"n_batches", an.n_batches},
               {"observables", an.observables},
               {"certificates", an.certificates},
               {"hormander_mode", mode_name(an.hormander_mode)},
               {"lyapunov_l", an.lyapunov_l}};
    if (an.lyapunov_c) an_norm["lyapunov_C"] = to_json(*an.lyapunov_c);
    an_norm["grid_points"] = an.grid_points;
    an_norm["noise_max_lag"] = an.noise_max_lag;
    an_norm["threads"] = an.threads;

    if (j.contains("rate")) {
      const std::string rp = "analysis.rate";
      const ojson& r = j.at("rate");
      allow_keys(r, rp, {"observable", "initial", "ensemble", "mu", "t_min"});
      RateConfig rc;
      rc.observable = string(r, "observable", rp, "energy");
      with_path(rp + ".observable", [&] { return make_observable(rc.observable, model); });
      rc.initial = point_state(required(r, "initial", rp), rp + ".initial", n, m);
      rc.ensemble = static_cast<int>(integer(r, "ensemble", rp, 256));
      if (rc.ensemble < 2) fail(rp + ".ensemble", "must be >= 2");
      if (r.contains("mu")) rc.mu = number(r.at("mu"), rp + ".mu");
      rc.t_min = number(r, "t_min", rp, 0.0);
      ojson rn = {{"observable", rc.observable}, {"initial", to_json(rc.initial)},
                  {"ensemble", rc.ensemble}};
      if (rc.mu) rn["mu"] = *rc.mu;
      rn["t_min"] = rc.t_min;
      an_norm["rate"] = rn;
      an.rate = rc;
    }
    if (j.contains("fordkac")) {
      const std::string fp = "analysis.fordkac";
      const ojson& f = j.at("fordkac");
      allow_keys(f, fp, {"m_list", "t_end", "n_ensemble", "dt", "omega_max_factor", "lag_step",
                         "origin_step", "bootstrap"});
      FordKacConfig fc;
      if (f.contains("m_list")) {
        const ojson& ml = f.at("m_list");
        if (!ml.is_array() || ml.empty()) fail(fp + ".m_list", "expected a nonempty array");
        fc.m_list.clear();
        for (std::size_t i = 0; i < ml.size(); ++i) {
          const long v = integer(ml[i], fp + ".m_list[" + std::to_string(i) + "]");
          if (v < 1) fail(fp + ".m_list", "bath sizes must be positive");
          if (!fc.m_list.empty() && v <= fc.m_list.back())
            fail(fp + ".m_list", "must be strictly increasing");
          fc.m_list.push_back(static_cast<int>(v));
        }
      }
      fc.t_end = number(f, "t_end", fp, 5.0);
      fc.n_ensemble = static_cast<int>(integer(f, "n_ensemble", fp, 256));
      fc.options.beta = model.beta;
      fc.options.dt = number(f, "dt", fp, 1e-3);
      fc.options.omega_max_factor = number(f, "omega_max_factor", fp, 20.0);
      fc.options.lag_step = number(f, "lag_step", fp, 0.01);
      fc.options.origin_step = number(f, "origin_step", fp, 0.1);
      fc.options.bootstrap = static_cast<int>(integer(f, "bootstrap", fp, 200));
      fc.options.threads = an.threads;
      if (fc.t_end < 0.0) fail(fp + ".t_end", "must be >= 0");
      if (fc.n_ensemble < 2) fail(fp + ".n_ensemble", "must be >= 2");
      if (!(fc.options.dt > 0.0) || !(fc.options.lag_step > 0.0) ||
          !(fc.options.origin_step > 0.0) || !(fc.options.omega_max_factor > 0.0))
        fail(fp, "dt, lag_step, origin_step and omega_max_factor must be positive");
      if (fc.options.bootstrap < 2) fail(fp + ".bootstrap", "must be >= 2");
      an_norm["fordkac"] = {{"m_list", fc.m_list},
                            {"t_end", fc.t_end},
                            {"n_ensemble", fc.n_ensemble},
                            {"dt", fc.options.dt},
                            {"omega_max_factor", fc.options.omega_max_factor},
                            {"lag_step", fc.options.lag_step},
                            {"origin_step", fc.options.origin_step},
                            {"bootstrap", fc.options.bootstrap}};
      an.fordkac = fc;
    }
  }

  // output
  OutputConfig out;
  {
    const std::string path = "output";
    const ojson j = root.contains("output") ? root.at("output") : ojson::object();
    allow_keys(j, path, {"dir", "format", "trajectory", "kernel_tau_max", "kernel_points"});
    out.dir = string(j, "dir", path, "");
    out.format = string(j, "format", path, "csv");
    if (out.format != "csv" && out.format != "json") fail("output.format", "must be csv or json");
    out.trajectory = boolean(j, "trajectory", path, true);
    out.kernel_tau_max = number(j, "kernel_tau_max", path, 0.0);
    out.kernel_points = static_cast<int>(integer(j, "kernel_points", path, 101));
    if (out.kernel_tau_max < 0.0) fail("output.kernel_tau_max", "must be >= 0");
    if (out.kernel_points < 2) fail("output.kernel_points", "must be >= 2");
  }

  ojson normalized;
  normalized["model"] = mp.normalized;
  normalized["coefficients"] = root.at("coefficients");
  normalized["integrator"] = integ_norm;
  normalized["analysis"] = an_norm;
  normalized["output"] = {{"dir", out.dir},
                          {"format", out.format},
                          {"trajectory", out.trajectory},
                          {"kernel_tau_max", out.kernel_tau_max},
                          {"kernel_points", out.kernel_points}};

  return Config{std::move(model), integ, std::move(initial), std::move(an), std::move(out),
                std::move(cp.modes), std::move(normalized)};
}

std::string serialize_config(const Config& config) { return config.normalized.dump(2) + "\n"; }

// ---------------------------------------------------------------------------

namespace {

// Parses "<letter><index>" starting at pos; returns the 0-based index.
bool take_index(std::string_view s, std::size_t& pos, char letter, int limit, int& index) {
  if (pos >= s.size() || s[pos] != letter) return false;
  std::size_t k = pos + 1;
  int v = 0;
  bool digits = false;
  while (k < s.size() && s[k] >= '0' && s[k] <= '9') {
    v = v * 10 + (s[k] - '0');
    if (v > 1000000) return false;
    digits = true;
    ++k;
  }
  if (!digits || v < 1 || v > limit) return false;
  index = v - 1;
  pos = k;
  return true;
}

}  // namespace

Observable make_observable(std::string_view name, const ModelSpec& model) {
  const int n = model.n();
  const int m = model.m();
  const std::string label(name);
  if (name.rfind("expr:", 0) == 0) {
    const Expr e = Expr::parse(name.substr(5), n);
    return {label, [e](const ExtendedState& x) {
              return e.eval(std::span<const double>(x.q.data(), static_cast<std::size_t>(x.q.size())));
            }};
  }
  if (name == "U" || name == "energy") {
    if (!model.force.is_conservative())
      throw Error(ErrorKind::kNonConservative, "observable '" + label + "' needs a potential");
    const ForceField force = model.force;
    if (name == "U") return {label, [force](const ExtendedState& x) { return force.potential(x.q); }};
    const MatrixXd minv = model.mass.inverse();
    return {label, [force, minv](const ExtendedState& x) {
              return 0.5 * x.p.dot(minv * x.p) + force.potential(x.q);
            }};
  }
  // component and product forms
  std::size_t pos = 0;
  int i = 0, j = 0;
  const bool is_q = take_index(name, pos, 'q', n, i);
  if (is_q && pos == name.size())
    return {label, [i](const ExtendedState& x) { return x.q(i); }};
  pos = 0;
  if (take_index(name, pos, 'p', n, i)) {
    if (pos == name.size()) return {label, [i](const ExtendedState& x) { return x.p(i); }};
    std::size_t rest = pos;
    if (take_index(name, rest, 'p', n, j) && rest == name.size())
      return {label, [i, j](const ExtendedState& x) { return x.p(i) * x.p(j); }};
    rest = pos;
    if (take_index(name, rest, 's', m, j) && rest == name.size())
      return {label, [i, j](const ExtendedState& x) { return x.p(i) * x.s(j); }};
  }
  pos = 0;
  if (take_index(name, pos, 's', m, i)) {
    if (pos == name.size()) return {label, [i](const ExtendedState& x) { return x.s(i); }};
    std::size_t rest = pos;
    if (take_index(name, rest, 's', m, j) && rest == name.size())
      return {label, [i, j](const ExtendedState& x) { return x.s(i) * x.s(j); }};
  }
  throw Error(ErrorKind::kValidation, "unknown observable '" + label + "'");
}

std::optional<double> gibbs_expectation(std::string_view name, const ModelSpec& model) {
  const int n = model.n();
  const int m = model.m();
  std::size_t pos = 0;
  int i = 0, j = 0;
  if (take_index(name, pos, 'p', n, i)) {
    if (pos == name.size()) return 0.0;
    std::size_t rest = pos;
    if (take_index(name, rest, 'p', n, j) && rest == name.size())
      return model.mass(i, j) / model.beta;
    rest = pos;
    if (take_index(name, rest, 's', m, j) && rest == name.size()) return 0.0;
  }
  pos = 0;
  if (take_index(name, pos, 's', m, i)) {
    if (pos == name.size()) return 0.0;
    std::size_t rest = pos;
    if (take_index(name, rest, 's', m, j) && rest == name.size() && model.Q)
      return (*model.Q)(i, j) / model.beta;
    return std::nullopt;
  }
  if (!model.domain.is_torus() || n != 1 || !model.force.is_conservative()) return std::nullopt;
  const Observable obs = make_observable(name, model);
  if (name == "energy") {
    const ForceField force = model.force;
    return 0.5 / model.beta +
           gibbs_q_expectation(model, [&](const VectorXd& q) { return force.potential(q); });
  }
  return gibbs_q_expectation(model, [&](const VectorXd& q) {
    ExtendedState x{q, VectorXd::Zero(n), VectorXd::Zero(m), 0.0};
    return obs.fn(x);
  });
}

}  // namespace qgle
