#pragma once

// Quasi-Markovian GLE in extended phase space x = (q, p, s):
//
//   dq = M^{-1} p dt
//   d(p, s) = [(F(q), 0) - Gamma(q) (M^{-1} p, s)] dt + beta^{-1/2} Sigma(q) dW
//
// with Gamma, Sigma of size (n+m)x(n+m) and blocks
//   Gamma = [[G11, G12], [G21, G22]],   Sigma = [[Sigma1], [Sigma2]].

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qgle/expr.hpp"

namespace qgle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class Domain {
 public:
  enum class Kind { kTorus, kEuclidean };

  Domain(Kind kind, int dim);
  static Domain torus(int dim) { return {Kind::kTorus, dim}; }
  static Domain euclidean(int dim) { return {Kind::kEuclidean, dim}; }

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  bool is_torus() const { return kind_ == Kind::kTorus; }

  /// Reduces torus coordinates into [0,1)^n; identity on R^n.
  void reduce(VectorXd& q) const;

 private:
  Kind kind_;
  int dim_;
};

using ScalarField = std::function<double(const VectorXd&)>;
using VectorField = std::function<VectorXd(const VectorXd&)>;

class ForceField {
 public:
  enum class Kind { kConservative, kNonconservative };

  static ForceField conservative(ScalarField potential, VectorField gradient);
  static ForceField nonconservative(VectorField force);

  /// Potential given as an expression; the gradient is its symbolic derivative.
  static ForceField from_potential(const Expr& potential, int dim);
  static ForceField from_components(const std::vector<Expr>& components);
  static ForceField zero(int dim);

  Kind kind() const { return kind_; }
  bool is_conservative() const { return kind_ == Kind::kConservative; }

  VectorXd operator()(const VectorXd& q) const;  // F(q)
  double potential(const VectorXd& q) const;      // U(q); conservative only
  VectorXd gradient(const VectorXd& q) const;     // grad U(q); conservative only

  /// Optional linear part H (force = -H q + bounded) for the unbounded-domain
  /// theory.
  const std::optional<MatrixXd>& linear_part() const { return linear_part_; }
  ForceField& with_linear_part(MatrixXd h);

  const std::optional<Expr>& potential_expr() const { return potential_expr_; }
  const std::vector<Expr>& force_exprs() const { return force_exprs_; }

 private:
  Kind kind_ = Kind::kNonconservative;
  ScalarField potential_;
  VectorField gradient_;
  VectorField force_;
  std::optional<MatrixXd> linear_part_;
  std::optional<Expr> potential_expr_;
  std::vector<Expr> force_exprs_;
};

/// Max relative error between `gradient` and a central finite-difference
/// gradient of `potential` over `points`.
double gradient_consistency(const ForceField& force, const std::vector<VectorXd>& points,
                            double h = 1e-5);

/// Sampled check that F(q) - (-H q) stays bounded over spheres of growing
/// radius. Returns the sup over samples of |F(q) + H q|.
double linear_part_residual_bound(const ForceField& force, const std::vector<double>& radii,
                                  int directions = 16);

class CoefficientField {
 public:
  static CoefficientField constant(int n, int m, MatrixXd gamma, MatrixXd sigma);
  /// Row-major (n+m)x(n+m) expression matrices.
  static CoefficientField position_dependent(int n, int m, std::vector<Expr> gamma,
                                             std::vector<Expr> sigma);

  int n() const { return n_; }
  int m() const { return m_; }
  int size() const { return n_ + m_; }
  bool is_constant() const { return constant_; }

  MatrixXd gamma(const VectorXd& q) const;
  MatrixXd sigma(const VectorXd& q) const;
  /// Constant-coefficient accessors; throw kPrecondition if position dependent.
  const MatrixXd& gamma() const;
  const MatrixXd& sigma() const;

  MatrixXd gamma11(const VectorXd& q) const;
  MatrixXd gamma12(const VectorXd& q) const;
  MatrixXd gamma21(const VectorXd& q) const;
  MatrixXd gamma22(const VectorXd& q) const;
  MatrixXd sigma1(const VectorXd& q) const;  // n x (n+m)
  MatrixXd sigma2(const VectorXd& q) const;  // m x (n+m)

  const std::vector<Expr>& gamma_exprs() const { return gamma_exprs_; }
  const std::vector<Expr>& sigma_exprs() const { return sigma_exprs_; }

 private:
  CoefficientField() = default;
  int n_ = 0;
  int m_ = 0;
  bool constant_ = true;
  MatrixXd gamma_;
  MatrixXd sigma_;
  std::vector<Expr> gamma_exprs_;
  std::vector<Expr> sigma_exprs_;
};

struct ModelSpec {
  Domain domain;
  MatrixXd mass;
  double beta;
  ForceField force;
  CoefficientField coeffs;
  std::optional<MatrixXd> Q;

  int n() const { return domain.dim(); }
  int m() const { return coeffs.m(); }

  /// Checks dimensions, SPD mass/Q, beta > 0. Throws kValidation.
  void validate() const;
};

struct ExtendedState {
  VectorXd q;
  VectorXd p;
  VectorXd s;
  double t = 0.0;

  bool finite() const;
};

/// Stable hash of the model parameters (used as trajectory metadata).
std::uint64_t model_fingerprint(const ModelSpec& model);

// -- fluctuation-dissipation algebra ----------------------------------------

struct FdtSolution {
  MatrixXd Q;
  double residual_white = 0.0;     // G11 + G11^T - Sigma1 Sigma1^T
  double residual_coupling = 0.0;  // G12 Q + G21^T - Sigma1 Sigma2^T
  double residual_aux = 0.0;       // G22 Q + Q G22^T - Sigma2 Sigma2^T
};

/// Solves the auxiliary block of the FDT for Q and checks the remaining two
/// blocks. Errors: kNoSolution, kInconsistent, kNotPositive.
FdtSolution solve_fdt_Q(const CoefficientField& coeffs, double rel_tol = 1e-9);

/// max over grid of |Gamma(q) diag(I,Q) + diag(I,Q) Gamma(q)^T - Sigma Sigma^T|_max
double verify_fdt(const CoefficientField& coeffs, const MatrixXd& Q,
                  const std::vector<VectorXd>& grid);

/// max over grid of |G12(q) Q + G21(q)^T|_max, or nullopt when G11 != 0
/// somewhere on the grid (the pure-colour constraint does not apply).
std::optional<double> purecolor_check(const CoefficientField& coeffs, const MatrixXd& Q,
                                      const std::vector<VectorXd>& grid);

/// min over grid of the minimal real part of spec(Gamma(q)).
double stability_margin(const CoefficientField& coeffs, const std::vector<VectorXd>& grid);

/// -beta [U(q) + p^T M^{-1} p / 2 + s^T Q^{-1} s / 2]
double gibbs_log_density(const ExtendedState& state, const ModelSpec& model);

/// Default grid: singleton for constant coefficients, otherwise
/// `points_per_dim` uniform points per dimension on [0,1] (both ends
/// included). Zero means 101 for n=1 and 21 otherwise.
std::vector<VectorXd> default_grid(int n, bool constant, int points_per_dim = 0);

/// Expression-backed coefficients of the torus example with
/// G12 = -(2+cos 2 pi q), G21 = 2+cos 2 pi q, G22 = 1, Sigma22 = sigma22.
CoefficientField example_torus_coefficients(double sigma22);

}  // namespace qgle
