#pragma once

// Dense linear-algebra helpers shared by the model, kernel and certificate
// code. All matrices are small (dimension 2n+m at most), so everything here is
// dense and allocation-happy.

#include <Eigen/Dense>

namespace qgle::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double max_abs(const MatrixXd& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

bool is_symmetric(const MatrixXd& a, double tol = 1e-12);

/// Smallest eigenvalue of the symmetric part of `a`.
double min_sym_eigenvalue(const MatrixXd& a);

/// Positive-definiteness with the threshold 1e-12 * max-norm.
bool is_spd(const MatrixXd& a);

/// Minimum real part of the spectrum of a general square matrix.
double min_real_eigenvalue(const MatrixXd& a);

/// Numerical rank with singular values above rel_tol * sigma_max.
int rank(const MatrixXd& a, double rel_tol = 1e-10);

/// Solves A X + X B = C for X by vectorising into a dense
/// (rows*cols)x(rows*cols) linear system. Throws kNoSolution if singular.
MatrixXd solve_sylvester(const MatrixXd& a, const MatrixXd& b, const MatrixXd& c);

MatrixXd expm(const MatrixXd& a);

struct OuDiscretization {
  MatrixXd propagator;  // e^{-A dt}
  MatrixXd covariance;  // int_0^dt e^{-Au} S e^{-A^T u} du
};

/// Exact one-step law of dz = -A z dt + dW with Cov(dW) = S dt, through the
/// augmented block exponential [[-A, S], [0, A^T]].
OuDiscretization discretize_ou(const MatrixXd& a, const MatrixXd& s, double dt);

struct PsdRoot {
  MatrixXd root;
  bool clipped = false;  // negative eigenvalues were set to zero
};

/// Symmetric square root of a (numerically) PSD matrix.
PsdRoot sqrt_psd(const MatrixXd& a);

/// Moore-Penrose pseudo-inverse via SVD.
MatrixXd pinv(const MatrixXd& a, double rel_tol = 1e-12);

}  // namespace qgle::linalg
