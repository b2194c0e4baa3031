#include "qgle/kernels.hpp"

#include <cmath>
#include <numbers>

#include "qgle/error.hpp"
#include "qgle/linalg.hpp"

namespace qgle {

MemoryKernel MemoryKernel::matrix_exp(MatrixXd delta, MatrixXd g12, MatrixXd g22,
                                      MatrixXd g21) {
  const Eigen::Index n = g12.rows();
  const Eigen::Index m = g22.rows();
  if (g12.cols() != m || g22.cols() != m || g21.rows() != m || g21.cols() != n)
    throw Error(ErrorKind::kDimensionMismatch, "kernel blocks have inconsistent shapes");
  if (delta.size() == 0) delta = MatrixXd::Zero(n, n);
  if (delta.rows() != n || delta.cols() != n)
    throw Error(ErrorKind::kDimensionMismatch, "delta part must be n x n");
  MemoryKernel k;
  k.kind_ = Kind::kMatrixExp;
  k.n_ = static_cast<int>(n);
  k.delta_ = std::move(delta);
  k.g12_ = std::move(g12);
  k.g22_ = std::move(g22);
  k.g21_ = std::move(g21);
  return k;
}

MemoryKernel MemoryKernel::prony(int n, std::vector<PronyMode> modes, MatrixXd delta) {
  if (n < 1) throw Error(ErrorKind::kPrecondition, "kernel dimension must be >= 1");
  for (const PronyMode& mode : modes)
    if (!(mode.c > 0.0) || !(mode.alpha > 0.0))
      throw Error(ErrorKind::kValidation, "Prony modes need c > 0 and alpha > 0");
  if (delta.size() == 0) delta = MatrixXd::Zero(n, n);
  if (delta.rows() != n || delta.cols() != n)
    throw Error(ErrorKind::kDimensionMismatch, "delta part must be n x n");
  MemoryKernel k;
  k.kind_ = Kind::kProny;
  k.n_ = n;
  k.delta_ = std::move(delta);
  k.modes_ = std::move(modes);
  return k;
}

MatrixXd kernel_eval(const MemoryKernel& kernel, double tau) {
  if (!(tau >= 0.0)) throw Error(ErrorKind::kPrecondition, "kernel lag must be >= 0");
  if (kernel.kind() == MemoryKernel::Kind::kProny) {
    double sum = 0.0;
    for (const PronyMode& mode : kernel.modes()) sum += mode.c * std::exp(-mode.alpha * tau);
    return sum * MatrixXd::Identity(kernel.n(), kernel.n());
  }
  return -kernel.g12() * linalg::expm(-tau * kernel.g22()) * kernel.g21();
}

MemoryKernel kernel_from_coeffs(const CoefficientField& coeffs) {
  const VectorXd q0 = VectorXd::Zero(coeffs.n());
  if (!coeffs.is_constant())
    throw Error(ErrorKind::kPrecondition, "kernel requires constant coefficients");
  return MemoryKernel::matrix_exp(coeffs.gamma11(q0), coeffs.gamma12(q0), coeffs.gamma22(q0),
                                  coeffs.gamma21(q0));
}

MatrixXd noise_covariance_eval(const CoefficientField& coeffs, const MatrixXd& Q, double beta,
                               double tau) {
  if (!(tau >= 0.0)) throw Error(ErrorKind::kPrecondition, "lag must be >= 0");
  if (!coeffs.is_constant())
    throw Error(ErrorKind::kPrecondition, "noise covariance requires constant coefficients");
  if (Q.rows() != coeffs.m() || Q.cols() != coeffs.m())
    throw Error(ErrorKind::kDimensionMismatch, "Q must be m x m");
  const VectorXd q0 = VectorXd::Zero(coeffs.n());
  const MatrixXd g12 = coeffs.gamma12(q0);
  return g12 * linalg::expm(-tau * coeffs.gamma22(q0)) * Q * g12.transpose() / beta;
}

MarkovianSystem coeffs_from_prony(const std::vector<PronyMode>& modes, int n) {
  if (modes.empty()) throw Error(ErrorKind::kPrecondition, "at least one Prony mode required");
  if (n < 1) throw Error(ErrorKind::kPrecondition, "n must be >= 1");
  for (const PronyMode& mode : modes)
    if (!(mode.c > 0.0) || !(mode.alpha > 0.0))
      throw Error(ErrorKind::kValidation, "Prony modes need c > 0 and alpha > 0");
  const int m = static_cast<int>(modes.size()) * n;
  MatrixXd gamma = MatrixXd::Zero(n + m, n + m);
  MatrixXd sigma = MatrixXd::Zero(n + m, n + m);
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const double root = std::sqrt(modes[i].c);
    for (int j = 0; j < n; ++j) {
      const int s = n + static_cast<int>(i) * n + j;
      gamma(j, s) = -root;
      gamma(s, j) = root;
      gamma(s, s) = modes[i].alpha;
      sigma(s, s) = std::sqrt(2.0 * modes[i].alpha);
    }
  }
  return {CoefficientField::constant(n, m, std::move(gamma), std::move(sigma)),
          MatrixXd::Identity(m, m)};
}

double spectral_density(const MemoryKernel& kernel, double k) {
  if (kernel.kind() != MemoryKernel::Kind::kProny)
    throw Error(ErrorKind::kPrecondition, "spectral density needs a Prony kernel");
  double sum = 0.0;
  for (const PronyMode& mode : kernel.modes())
    sum += mode.c * mode.alpha / (std::numbers::pi * (mode.alpha * mode.alpha + k * k));
  return sum;
}

void FordKacSpectrum::validate() const {
  for (const FordKacMode& mode : modes)
    if (!(mode.k > 0.0) || !(mode.omega > 0.0))
      throw Error(ErrorKind::kValidation, "Ford-Kac modes need k > 0 and omega > 0");
}

double fordkac_kernel(const FordKacSpectrum& spectrum, double t) {
  double sum = 0.0;
  for (const FordKacMode& mode : spectrum.modes) sum += mode.k * std::cos(mode.omega * t);
  return sum;
}

FordKacSpectrum fordkac_spectrum_for_exponential(double c, double alpha, int m_modes,
                                                 double omega_max) {
  if (!(c > 0.0) || !(alpha > 0.0) || m_modes < 1 || !(omega_max > 0.0))
    throw Error(ErrorKind::kValidation, "bath spectrum parameters must be positive");
  FordKacSpectrum out;
  out.modes.reserve(static_cast<std::size_t>(m_modes));
  const double dw = omega_max / m_modes;
  for (int i = 0; i < m_modes; ++i) {
    const double w = (i + 0.5) * dw;
    const double density = 2.0 * c * alpha / (std::numbers::pi * (alpha * alpha + w * w));
    out.modes.push_back({density * dw, w});
  }
  return out;
}

NoneqKernels noneq_kernels(const NoneqBlocks& b) {
  const Eigen::Index n = b.g11_1.rows();
  const Eigen::Index mh = b.g22_1.rows();
  auto shape = [](const MatrixXd& a, Eigen::Index r, Eigen::Index c, const char* name) {
    if (a.rows() != r || a.cols() != c)
      throw Error(ErrorKind::kDimensionMismatch,
                  std::string(name) + " must be " + std::to_string(r) + "x" + std::to_string(c));
  };
  shape(b.g11_1, n, n, "G11^(1)");
  shape(b.g12_1, n, mh, "G12^(1)");
  shape(b.g21_1, mh, n, "G21^(1)");
  shape(b.g22_1, mh, mh, "G22^(1)");
  shape(b.g12_2, n, mh, "G12^(2)");
  shape(b.g22_2, mh, mh, "G22^(2)");
  shape(b.sigma11_2, n, n, "Sigma11^(2)");
  if (linalg::min_real_eigenvalue(b.g22_1) <= 0.0 || linalg::min_real_eigenvalue(b.g22_2) <= 0.0)
    throw Error(ErrorKind::kUnstable, "-G22 of both hat systems must be stable");

  MatrixXd s22;
  if (b.sigma22_2) {
    shape(*b.sigma22_2, mh, mh, "Sigma22^(2)");
    s22 = *b.sigma22_2;
  } else {
    const MatrixXd sym = b.g22_2 + b.g22_2.transpose();
    const linalg::PsdRoot root = linalg::sqrt_psd(sym);
    if (root.clipped)
      throw Error(ErrorKind::kNotPositive, "G22^(2) + G22^(2)^T is not positive semidefinite");
    s22 = root.root;
  }

  NoneqKernels out{
      MemoryKernel::matrix_exp(b.g11_1, b.g12_1, b.g22_1, b.g21_1),
      MemoryKernel::matrix_exp(2.0 * b.sigma11_2, b.g12_2, b.g22_2, -b.g12_2.transpose()),
      CoefficientField::constant(1, 1, MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2))};

  const Eigen::Index d = n + 2 * mh;
  MatrixXd gamma = MatrixXd::Zero(d, d);
  gamma.block(0, 0, n, n) = b.g11_1;
  gamma.block(0, n, n, mh) = b.g12_1;
  gamma.block(0, n + mh, n, mh) = b.g12_2;
  gamma.block(n, 0, mh, n) = b.g21_1;
  gamma.block(n, n, mh, mh) = b.g22_1;
  gamma.block(n + mh, n + mh, mh, mh) = b.g22_2;
  MatrixXd sigma = MatrixXd::Zero(d, d);
  sigma.block(0, 0, n, n) = b.sigma11_2;
  sigma.block(n + mh, n + mh, mh, mh) = s22;
  out.stacked = CoefficientField::constant(static_cast<int>(n), static_cast<int>(2 * mh),
                                           std::move(gamma), std::move(sigma));
  return out;
}

}  // namespace qgle
