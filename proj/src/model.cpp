#include "qgle/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "qgle/error.hpp"
#include "qgle/linalg.hpp"

namespace qgle {

Domain::Domain(Kind kind, int dim) : kind_(kind), dim_(dim) {
  if (dim < 1) throw Error(ErrorKind::kPrecondition, "domain dimension must be >= 1");
}

void Domain::reduce(VectorXd& q) const {
  if (kind_ != Kind::kTorus) return;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    double r = q(i) - std::floor(q(i));
    if (r >= 1.0) r = 0.0;  // floor of values just below an integer
    q(i) = r;
  }
}

// ---------------------------------------------------------------------------

ForceField ForceField::conservative(ScalarField potential, VectorField gradient) {
  ForceField f;
  f.kind_ = Kind::kConservative;
  f.potential_ = std::move(potential);
  f.gradient_ = std::move(gradient);
  return f;
}

ForceField ForceField::nonconservative(VectorField force) {
  ForceField f;
  f.kind_ = Kind::kNonconservative;
  f.force_ = std::move(force);
  return f;
}

namespace {

std::span<const double> as_span(const VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

ForceField ForceField::from_potential(const Expr& potential, int dim) {
  std::vector<Expr> grad;
  grad.reserve(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) grad.push_back(potential.derivative(i));
  ForceField f = conservative(
      [potential](const VectorXd& q) { return potential.eval(as_span(q)); },
      [grad](const VectorXd& q) {
        VectorXd g(static_cast<Eigen::Index>(grad.size()));
        for (std::size_t i = 0; i < grad.size(); ++i)
          g(static_cast<Eigen::Index>(i)) = grad[i].eval(as_span(q));
        return g;
      });
  f.potential_expr_ = potential;
  return f;
}

ForceField ForceField::from_components(const std::vector<Expr>& components) {
  ForceField f = nonconservative([components](const VectorXd& q) {
    VectorXd out(static_cast<Eigen::Index>(components.size()));
    for (std::size_t i = 0; i < components.size(); ++i)
      out(static_cast<Eigen::Index>(i)) = components[i].eval(as_span(q));
    return out;
  });
  f.force_exprs_ = components;
  return f;
}

ForceField ForceField::zero(int dim) {
  ForceField f = conservative([](const VectorXd&) { return 0.0; },
                              [dim](const VectorXd&) { return VectorXd::Zero(dim).eval(); });
  f.potential_expr_ = Expr::constant(0.0);
  return f;
}

VectorXd ForceField::operator()(const VectorXd& q) const {
  if (kind_ == Kind::kConservative) return -gradient_(q);
  return force_(q);
}

double ForceField::potential(const VectorXd& q) const {
  if (kind_ != Kind::kConservative)
    throw Error(ErrorKind::kNonConservative, "force field has no potential");
  return potential_(q);
}

VectorXd ForceField::gradient(const VectorXd& q) const {
  if (kind_ != Kind::kConservative)
    throw Error(ErrorKind::kNonConservative, "force field has no potential");
  return gradient_(q);
}

ForceField& ForceField::with_linear_part(MatrixXd h) {
  if (h.rows() != h.cols() || !linalg::is_spd(h))
    throw Error(ErrorKind::kValidation, "linear part H must be symmetric positive definite");
  linear_part_ = std::move(h);
  return *this;
}

double gradient_consistency(const ForceField& force, const std::vector<VectorXd>& points,
                            double h) {
  double worst = 0.0;
  for (const VectorXd& q : points) {
    const VectorXd g = force.gradient(q);
    VectorXd fd(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      VectorXd qp = q;
      VectorXd qm = q;
      qp(i) += h;
      qm(i) -= h;
      fd(i) = (force.potential(qp) - force.potential(qm)) / (2 * h);
    }
    const double scale = std::max({1.0, g.cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff()});
    worst = std::max(worst, (g - fd).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

double linear_part_residual_bound(const ForceField& force, const std::vector<double>& radii,
                                  int directions) {
  if (!force.linear_part())
    throw Error(ErrorKind::kPrecondition, "force has no linear part");
  const MatrixXd& h = *force.linear_part();
  const Eigen::Index n = h.rows();
  double sup = 0.0;
  for (double r : radii) {
    for (int k = 0; k < directions; ++k) {
      VectorXd dir(n);
      for (Eigen::Index i = 0; i < n; ++i)
        dir(i) = std::cos(2 * std::numbers::pi * (k + 0.5) / directions * static_cast<double>(i + 1) +
                          static_cast<double>(i));
      if (dir.norm() == 0.0) dir(0) = 1.0;
      const VectorXd q = r * dir.normalized();
      sup = std::max(sup, (force(q) + h * q).cwiseAbs().maxCoeff());
    }
  }
  return sup;
}

// ---------------------------------------------------------------------------

CoefficientField CoefficientField::constant(int n, int m, MatrixXd gamma, MatrixXd sigma) {
  if (n < 1 || m < 1) throw Error(ErrorKind::kValidation, "coefficient blocks need n, m >= 1");
  const int d = n + m;
  if (gamma.rows() != d || gamma.cols() != d || sigma.rows() != d || sigma.cols() != d)
    throw Error(ErrorKind::kDimensionMismatch,
                "Gamma and Sigma must be (n+m)x(n+m) = " + std::to_string(d) + "x" +
                    std::to_string(d));
  CoefficientField c;
  c.n_ = n;
  c.m_ = m;
  c.constant_ = true;
  c.gamma_ = std::move(gamma);
  c.sigma_ = std::move(sigma);
  return c;
}

CoefficientField CoefficientField::position_dependent(int n, int m, std::vector<Expr> gamma,
                                                      std::vector<Expr> sigma) {
  if (n < 1 || m < 1) throw Error(ErrorKind::kValidation, "coefficient blocks need n, m >= 1");
  const auto d = static_cast<std::size_t>(n + m);
  if (gamma.size() != d * d || sigma.size() != d * d)
    throw Error(ErrorKind::kDimensionMismatch, "expression matrices must have (n+m)^2 entries");
  const bool all_const =
      std::all_of(gamma.begin(), gamma.end(), [](const Expr& e) { return e.is_constant(); }) &&
      std::all_of(sigma.begin(), sigma.end(), [](const Expr& e) { return e.is_constant(); });
  CoefficientField c;
  c.n_ = n;
  c.m_ = m;
  c.gamma_exprs_ = std::move(gamma);
  c.sigma_exprs_ = std::move(sigma);
  if (all_const) {
    c.constant_ = true;
    c.gamma_ = c.gamma(VectorXd::Zero(n));
    c.sigma_ = c.sigma(VectorXd::Zero(n));
  } else {
    c.constant_ = false;
  }
  return c;
}

namespace {

MatrixXd eval_matrix(const std::vector<Expr>& entries, int d, const VectorXd& q) {
  MatrixXd out(d, d);
  const auto qs = as_span(q);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = entries[static_cast<std::size_t>(i * d + j)].eval(qs);
  return out;
}

}  // namespace

MatrixXd CoefficientField::gamma(const VectorXd& q) const {
  if (constant_ && gamma_.size() > 0) return gamma_;
  return eval_matrix(gamma_exprs_, size(), q);
}

MatrixXd CoefficientField::sigma(const VectorXd& q) const {
  if (constant_ && sigma_.size() > 0) return sigma_;
  return eval_matrix(sigma_exprs_, size(), q);
}

const MatrixXd& CoefficientField::gamma() const {
  if (!constant_) throw Error(ErrorKind::kPrecondition, "coefficients are position dependent");
  return gamma_;
}

const MatrixXd& CoefficientField::sigma() const {
  if (!constant_) throw Error(ErrorKind::kPrecondition, "coefficients are position dependent");
  return sigma_;
}

MatrixXd CoefficientField::gamma11(const VectorXd& q) const {
  return gamma(q).topLeftCorner(n_, n_);
}
MatrixXd CoefficientField::gamma12(const VectorXd& q) const {
  return gamma(q).topRightCorner(n_, m_);
}
MatrixXd CoefficientField::gamma21(const VectorXd& q) const {
  return gamma(q).bottomLeftCorner(m_, n_);
}
MatrixXd CoefficientField::gamma22(const VectorXd& q) const {
  return gamma(q).bottomRightCorner(m_, m_);
}
MatrixXd CoefficientField::sigma1(const VectorXd& q) const { return sigma(q).topRows(n_); }
MatrixXd CoefficientField::sigma2(const VectorXd& q) const { return sigma(q).bottomRows(m_); }

// ---------------------------------------------------------------------------

void ModelSpec::validate() const {
  const int n = domain.dim();
  if (coeffs.n() != n)
    throw Error(ErrorKind::kValidation, "coefficient block n=" + std::to_string(coeffs.n()) +
                                            " does not match domain dimension " +
                                            std::to_string(n));
  if (mass.rows() != n || mass.cols() != n || !linalg::is_spd(mass))
    throw Error(ErrorKind::kValidation, "mass must be an SPD n x n matrix");
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw Error(ErrorKind::kValidation, "beta must be positive");
  if (Q) {
    if (Q->rows() != coeffs.m() || Q->cols() != coeffs.m() || !linalg::is_spd(*Q))
      throw Error(ErrorKind::kValidation, "Q must be an SPD m x m matrix");
  }
  if (force.linear_part() && force.linear_part()->rows() != n)
    throw Error(ErrorKind::kValidation, "linear part must be n x n");
}

bool ExtendedState::finite() const {
  return q.allFinite() && p.allFinite() && s.allFinite() && std::isfinite(t);
}

namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* data, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  }
  void num(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) { bytes(s.data(), s.size()); }
  void mat(const MatrixXd& a) {
    num(static_cast<double>(a.rows()));
    num(static_cast<double>(a.cols()));
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i) num(a(i, j));
  }
};

}  // namespace

std::uint64_t model_fingerprint(const ModelSpec& model) {
  Fnv f;
  f.num(model.domain.is_torus() ? 1.0 : 0.0);
  f.num(model.domain.dim());
  f.mat(model.mass);
  f.num(model.beta);
  f.num(model.coeffs.m());
  if (model.coeffs.is_constant() && model.coeffs.gamma_exprs().empty()) {
    f.mat(model.coeffs.gamma());
    f.mat(model.coeffs.sigma());
  } else {
    for (const Expr& e : model.coeffs.gamma_exprs()) f.str(e.to_string());
    for (const Expr& e : model.coeffs.sigma_exprs()) f.str(e.to_string());
  }
  if (model.force.potential_expr()) f.str(model.force.potential_expr()->to_string());
  for (const Expr& e : model.force.force_exprs()) f.str(e.to_string());
  if (model.Q) f.mat(*model.Q);
  return f.h;
}

// ---------------------------------------------------------------------------

FdtSolution solve_fdt_Q(const CoefficientField& coeffs, double rel_tol) {
  if (!coeffs.is_constant())
    throw Error(ErrorKind::kPrecondition, "solve_fdt_Q requires constant coefficients");
  const VectorXd q0 = VectorXd::Zero(coeffs.n());
  const MatrixXd g11 = coeffs.gamma11(q0);
  const MatrixXd g12 = coeffs.gamma12(q0);
  const MatrixXd g21 = coeffs.gamma21(q0);
  const MatrixXd g22 = coeffs.gamma22(q0);
  const MatrixXd s1 = coeffs.sigma1(q0);
  const MatrixXd s2 = coeffs.sigma2(q0);

  const MatrixXd s22 = s2 * s2.transpose();
  MatrixXd q = linalg::solve_sylvester(g22, g22.transpose(), s22);
  q = 0.5 * (q + q.transpose());

  FdtSolution out;
  out.Q = q;
  out.residual_aux = linalg::max_abs(g22 * q + q * g22.transpose() - s22);
  out.residual_white = linalg::max_abs(g11 + g11.transpose() - s1 * s1.transpose());
  out.residual_coupling = linalg::max_abs(g12 * q + g21.transpose() - s1 * s2.transpose());

  const double scale = std::max({1.0, linalg::max_abs(coeffs.gamma()),
                                 linalg::max_abs(coeffs.sigma() * coeffs.sigma().transpose()),
                                 linalg::max_abs(q)});
  if (out.residual_white > rel_tol * scale || out.residual_coupling > rel_tol * scale)
    throw Error(ErrorKind::kInconsistent,
                "FDT blocks are inconsistent: white-noise residual " +
                    std::to_string(out.residual_white) + ", coupling residual " +
                    std::to_string(out.residual_coupling));
  if (linalg::min_sym_eigenvalue(q) <= 1e-12 * std::max(1.0, linalg::max_abs(q)))
    throw Error(ErrorKind::kNotPositive, "solved Q is not positive definite");
  return out;
}

double verify_fdt(const CoefficientField& coeffs, const MatrixXd& Q,
                  const std::vector<VectorXd>& grid) {
  if (Q.rows() != coeffs.m() || Q.cols() != coeffs.m())
    throw Error(ErrorKind::kDimensionMismatch, "Q must be m x m");
  if (grid.empty()) throw Error(ErrorKind::kPrecondition, "grid must be nonempty");
  const int n = coeffs.n();
  MatrixXd qt = MatrixXd::Identity(coeffs.size(), coeffs.size());
  qt.bottomRightCorner(coeffs.m(), coeffs.m()) = Q;
  double worst = 0.0;
  for (const VectorXd& q : grid) {
    if (q.size() != n) throw Error(ErrorKind::kDimensionMismatch, "grid point has wrong size");
    const MatrixXd g = coeffs.gamma(q);
    const MatrixXd s = coeffs.sigma(q);
    worst = std::max(worst, linalg::max_abs(g * qt + qt * g.transpose() - s * s.transpose()));
  }
  return worst;
}

std::optional<double> purecolor_check(const CoefficientField& coeffs, const MatrixXd& Q,
                                      const std::vector<VectorXd>& grid) {
  if (Q.rows() != coeffs.m() || Q.cols() != coeffs.m())
    throw Error(ErrorKind::kDimensionMismatch, "Q must be m x m");
  double worst = 0.0;
  for (const VectorXd& q : grid) {
    if (linalg::max_abs(coeffs.gamma11(q)) != 0.0) return std::nullopt;
    worst = std::max(worst, linalg::max_abs(coeffs.gamma12(q) * Q + coeffs.gamma21(q).transpose()));
  }
  return worst;
}

double stability_margin(const CoefficientField& coeffs, const std::vector<VectorXd>& grid) {
  if (grid.empty()) throw Error(ErrorKind::kPrecondition, "grid must be nonempty");
  double margin = std::numeric_limits<double>::infinity();
  for (const VectorXd& q : grid)
    margin = std::min(margin, linalg::min_real_eigenvalue(coeffs.gamma(q)));
  return margin;
}

double gibbs_log_density(const ExtendedState& state, const ModelSpec& model) {
  if (!model.force.is_conservative())
    throw Error(ErrorKind::kNonConservative, "Gibbs density needs a conservative force");
  if (!model.Q) throw Error(ErrorKind::kPrecondition, "Gibbs density needs Q");
  const double kinetic = 0.5 * state.p.dot(model.mass.ldlt().solve(state.p));
  const double aux = 0.5 * state.s.dot(model.Q->ldlt().solve(state.s));
  return -model.beta * (model.force.potential(state.q) + kinetic + aux);
}

std::vector<VectorXd> default_grid(int n, bool constant, int points_per_dim) {
  if (constant) return {VectorXd::Zero(n)};
  if (points_per_dim <= 0) points_per_dim = n == 1 ? 101 : 21;
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= static_cast<std::size_t>(points_per_dim);
  std::vector<VectorXd> grid;
  grid.reserve(total);
  const double step = points_per_dim > 1 ? 1.0 / (points_per_dim - 1) : 0.0;
  for (std::size_t k = 0; k < total; ++k) {
    VectorXd q(n);
    std::size_t rest = k;
    for (int i = 0; i < n; ++i) {
      q(i) = static_cast<double>(rest % static_cast<std::size_t>(points_per_dim)) * step;
      rest /= static_cast<std::size_t>(points_per_dim);
    }
    grid.push_back(q);
  }
  return grid;
}

CoefficientField example_torus_coefficients(double sigma22) {
  const Expr g = Expr::constant(2.0) +
                 cos(Expr::constant(2.0) * Expr::pi() * Expr::var(0));
  std::vector<Expr> gamma = {Expr::constant(0.0), -g, g, Expr::constant(1.0)};
  std::vector<Expr> sigma = {Expr::constant(0.0), Expr::constant(0.0), Expr::constant(0.0),
                             Expr::constant(sigma22)};
  return CoefficientField::position_dependent(1, 1, std::move(gamma), std::move(sigma));
}

}  // namespace qgle
