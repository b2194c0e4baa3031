#include "qgle/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include "qgle/error.hpp"

namespace qgle::linalg {

bool is_symmetric(const MatrixXd& a, double tol) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, max_abs(a));
  return max_abs(a - a.transpose()) <= tol * scale;
}

double min_sym_eigenvalue(const MatrixXd& a) {
  if (a.rows() != a.cols())
    throw Error(ErrorKind::kDimensionMismatch, "min_sym_eigenvalue: matrix not square");
  const MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw Error(ErrorKind::kNumericalFailure, "symmetric eigensolver failed");
  return es.eigenvalues().minCoeff();
}

bool is_spd(const MatrixXd& a) {
  if (!is_symmetric(a, 1e-10)) return false;
  return min_sym_eigenvalue(a) > 1e-12 * max_abs(a);
}

double min_real_eigenvalue(const MatrixXd& a) {
  if (a.rows() != a.cols())
    throw Error(ErrorKind::kDimensionMismatch, "min_real_eigenvalue: matrix not square");
  Eigen::EigenSolver<MatrixXd> es(a, false);
  if (es.info() != Eigen::Success)
    throw Error(ErrorKind::kNumericalFailure, "eigenvalue iteration did not converge");
  return es.eigenvalues().real().minCoeff();
}

int rank(const MatrixXd& a, double rel_tol) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * sv(0)) ++r;
  return r;
}

MatrixXd solve_sylvester(const MatrixXd& a, const MatrixXd& b, const MatrixXd& c) {
  const Eigen::Index r = a.rows();
  const Eigen::Index k = b.rows();
  if (a.cols() != r || b.cols() != k || c.rows() != r || c.cols() != k)
    throw Error(ErrorKind::kDimensionMismatch, "solve_sylvester: shape mismatch");
  // vec(A X) = (I_k (x) A) vec X,  vec(X B) = (B^T (x) I_r) vec X
  MatrixXd system = MatrixXd::Zero(r * k, r * k);
  for (Eigen::Index j = 0; j < k; ++j) {
    system.block(j * r, j * r, r, r) += a;
    for (Eigen::Index l = 0; l < k; ++l)
      system.block(j * r, l * r, r, r) += b(l, j) * MatrixXd::Identity(r, r);
  }
  const VectorXd rhs = Eigen::Map<const VectorXd>(c.data(), c.size());
  Eigen::FullPivLU<MatrixXd> lu(system);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible())
    throw Error(ErrorKind::kNoSolution, "vectorised Sylvester/Lyapunov system is singular");
  const VectorXd x = lu.solve(rhs);
  return Eigen::Map<const MatrixXd>(x.data(), r, k);
}

MatrixXd expm(const MatrixXd& a) {
  if (a.rows() != a.cols())
    throw Error(ErrorKind::kDimensionMismatch, "expm: matrix not square");
  if (a.size() == 0) return a;
  return a.exp();
}

OuDiscretization discretize_ou(const MatrixXd& a, const MatrixXd& s, double dt) {
  const Eigen::Index d = a.rows();
  MatrixXd block = MatrixXd::Zero(2 * d, 2 * d);
  block.topLeftCorner(d, d) = -a * dt;
  block.topRightCorner(d, d) = s * dt;
  block.bottomRightCorner(d, d) = a.transpose() * dt;
  const MatrixXd e = expm(block);
  OuDiscretization out;
  out.propagator = e.topLeftCorner(d, d);
  MatrixXd cov = e.topRightCorner(d, d) * out.propagator.transpose();
  out.covariance = 0.5 * (cov + cov.transpose());
  return out;
}

PsdRoot sqrt_psd(const MatrixXd& a) {
  PsdRoot out;
  if (a.size() == 0) {
    out.root = a;
    return out;
  }
  const MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.info() != Eigen::Success)
    throw Error(ErrorKind::kNumericalFailure, "symmetric eigensolver failed");
  VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < 0.0) {
      // tiny negative values are roundoff; anything else is still clipped but
      // reported to the caller
      if (ev(i) < -1e-14 * std::max(1.0, max_abs(sym))) out.clipped = true;
      ev(i) = 0.0;
    }
  }
  out.root = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  return out;
}

MatrixXd pinv(const MatrixXd& a, double rel_tol) {
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  VectorXd sv = svd.singularValues();
  const double cut = sv.size() > 0 ? rel_tol * sv(0) : 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) sv(i) = sv(i) > cut ? 1.0 / sv(i) : 0.0;
  return svd.matrixV() * sv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace qgle::linalg
