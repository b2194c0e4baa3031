#pragma once

// Executable versions of the ergodicity hypotheses: rank conditions,
// Lyapunov matrices and sampled drift inequalities, positivity grids.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qgle/model.hpp"

namespace qgle {

enum class CertificateKind {
  kStability,
  kFdt,
  kHormander,
  kLyapunovConst,
  kLyapunovUnbounded,
  kLyapunovPosdep,
  kPotentialGrowth,
};

std::string_view to_string(CertificateKind kind);

/// For rank checks the margin is achieved minus required rank, so they are
/// satisfied exactly when the margin is zero. All other certificates are
/// satisfied iff margin > 0.
struct Certificate {
  CertificateKind kind = CertificateKind::kStability;
  bool satisfied = false;
  double margin = 0.0;
  std::map<std::string, MatrixXd> matrices;
  std::map<std::string, double> constants;
  std::string notes;
};

Certificate stability_certificate(const CoefficientField& coeffs,
                                  const std::vector<VectorXd>& grid);
Certificate fdt_certificate(const CoefficientField& coeffs, const std::vector<VectorXd>& grid,
                            double tol = 1e-9);

// -- Schur complements -------------------------------------------------------

struct SchurResult {
  bool psd = false;
  bool pd = false;
  double margin = 0.0;  // min eigenvalue of the assembled matrix
};

/// Decides definiteness of [[A11, A12], [A12^T, A22]] through Schur
/// complements, using a pseudo-inverse when A22 is singular.
SchurResult schur_psd(const MatrixXd& a11, const MatrixXd& a12, const MatrixXd& a22);

// -- hypoellipticity ---------------------------------------------------------

enum class HormanderMode { kI, kII, kIII };

/// Mode i needs the linear force part H (F = -H q).
Certificate hormander_const_check(const MatrixXd& gamma, const MatrixXd& sigma, int n,
                                  HormanderMode mode, const MatrixXd* h = nullptr);

// -- Lyapunov matrices -------------------------------------------------------

struct LyapunovMatrix {
  MatrixXd C;            // min eigenvalue 1
  double lambda = 0.0;   // G^T C + C G = lambda * rhs
  double residual = 0.0;
};

/// Errors: kUnstable, kSolveFailure.
LyapunovMatrix lyapunov_matrix_const(const MatrixXd& gamma, const MatrixXd& rhs = MatrixXd());

// -- drift inequality --------------------------------------------------------

/// K(x) = w(x)^l + offset with
///   w(x) = x^T Chat x + c_V (V(q) - u_min) + w0,   x = (q, p, s).
struct LyapunovFunction {
  MatrixXd c_hat;  // (2n+m) x (2n+m)
  double c_v = 0.0;
  double u_min = 0.0;
  double w0 = 0.0;
  double offset = 0.0;
  int l = 1;

  /// (z^T C z)^l + 1 with z = (p, s).
  static LyapunovFunction torus(const MatrixXd& c, int n, int l);
  /// Quadratic-plus-potential family of the unbounded theory.
  static LyapunovFunction euclidean(const MatrixXd& gamma21, const MatrixXd& q_inv, double a,
                                    double b, double d, double u_min, int l);

  double value(const ModelSpec& model, const ExtendedState& x) const;
  /// Generator applied in closed form.
  double generator(const ModelSpec& model, const ExtendedState& x) const;
  /// Generator assembled from finite-difference derivatives of K.
  double generator_fd(const ModelSpec& model, const ExtendedState& x, double h = 1e-4) const;
};

struct DriftConstants {
  double a = 0.0;
  double b = 0.0;
  double fd_max_rel_error = 0.0;
  std::size_t n_samples = 0;
};

/// Deterministic Halton samples with |z| <= radius (q uniform on the torus, or
/// |x| <= radius on R^n).
std::vector<ExtendedState> drift_samples(const ModelSpec& model, int count = 4096,
                                         double radius = 20.0);

/// Sampled LK <= -a K + b. Throws kInfeasible if a <= 0.
DriftConstants lyapunov_drift_constants(const ModelSpec& model, const LyapunovFunction& k,
                                        const std::vector<ExtendedState>& samples,
                                        double k_quantile = 0.5);
DriftConstants lyapunov_drift_constants(const ModelSpec& model, const MatrixXd& c, int l,
                                        const std::vector<ExtendedState>& samples);

Certificate lyapunov_const_certificate(const ModelSpec& model, int l = 1, int n_samples = 4096,
                                       double radius = 20.0);

// -- unbounded domain --------------------------------------------------------

struct UnboundedParams {
  double e = 1.0;        // growth constant E
  double h_bar = 0.0;    // |<g, F(q)>| <= h_bar |<g, q>| + h
  int max_doublings = 60;
};

Certificate unbounded_certificate(const MatrixXd& gamma, const MatrixXd& Q, int n,
                                  const UnboundedParams& params);

/// Quadratic forms of the unbounded Lyapunov construction, exposed for tests.
MatrixXd unbounded_c_hat(const MatrixXd& gamma, const MatrixXd& Q, int n, double a, double b);
MatrixXd unbounded_r_hat(const MatrixXd& gamma, const MatrixXd& Q, int n, double a, double b,
                         double e);

// -- position-dependent ------------------------------------------------------

struct EigenRow {
  VectorXd q;
  VectorXd eigenvalues;  // ascending
};

struct PosdepVerification {
  double margin = 0.0;
  std::vector<EigenRow> table;
};

/// min over grid of min eig of G(q) C + C G(q)^T.
PosdepVerification posdep_certificate_verify(const CoefficientField& coeffs, const MatrixXd& c,
                                             const std::vector<VectorXd>& grid);

/// Throws kSearchExhausted when no certificate is found.
MatrixXd posdep_certificate_search(const CoefficientField& coeffs,
                                   const std::vector<VectorXd>& grid, int max_iter = 50);

// -- potential growth --------------------------------------------------------

struct GrowthInput {
  int n = 1;
  ScalarField v;
  VectorField grad_v;
  VectorField force;  // optional; enables G
  std::vector<double> radii;
  std::vector<double> d_grid;
  int directions = 64;
};

Certificate potential_growth_check(const GrowthInput& input);

}  // namespace qgle
