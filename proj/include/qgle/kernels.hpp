#pragma once

// Memory kernels K(t) = delta(t) K0 + K_c(t) and their Markovian embeddings.
// The coloured part of a constant-coefficient system is
//   K_c(t) = -G12 exp(-G22 t) G21.

#include <vector>

#include <Eigen/Dense>

#include "qgle/model.hpp"

namespace qgle {

struct PronyMode {
  double c;
  double alpha;
};

class MemoryKernel {
 public:
  enum class Kind { kMatrixExp, kProny };

  static MemoryKernel matrix_exp(MatrixXd delta, MatrixXd g12, MatrixXd g22, MatrixXd g21);
  /// n x n kernel sum_i c_i exp(-alpha_i t) I_n.
  static MemoryKernel prony(int n, std::vector<PronyMode> modes, MatrixXd delta = MatrixXd());

  int n() const { return n_; }
  Kind kind() const { return kind_; }
  const MatrixXd& delta_part() const { return delta_; }
  const std::vector<PronyMode>& modes() const { return modes_; }
  const MatrixXd& g12() const { return g12_; }
  const MatrixXd& g22() const { return g22_; }
  const MatrixXd& g21() const { return g21_; }

 private:
  MemoryKernel() = default;
  Kind kind_ = Kind::kProny;
  int n_ = 0;
  MatrixXd delta_;
  MatrixXd g12_, g22_, g21_;
  std::vector<PronyMode> modes_;
};

/// Coloured part of the kernel at lag tau >= 0.
MatrixXd kernel_eval(const MemoryKernel& kernel, double tau);

/// Kernel of a constant coefficient field (delta part G11).
MemoryKernel kernel_from_coeffs(const CoefficientField& coeffs);

/// Coloured noise covariance beta^{-1} G12 exp(-G22 tau) Q G12^T.
MatrixXd noise_covariance_eval(const CoefficientField& coeffs, const MatrixXd& Q, double beta,
                               double tau);

struct MarkovianSystem {
  CoefficientField coeffs;
  MatrixXd Q;
};

/// Square-root embedding of a Prony series; every mode couples to each of the
/// n coordinates through its own auxiliary variable (m = modes * n).
/// Auxiliary index of (mode i, coordinate j) is i*n + j.
MarkovianSystem coeffs_from_prony(const std::vector<PronyMode>& modes, int n = 1);

/// rho(k) = sum_i c_i alpha_i / (pi (alpha_i^2 + k^2)), so that
/// K(t) = int rho(k) e^{ikt} dk.
double spectral_density(const MemoryKernel& kernel, double k);

// -- Ford-Kac heat bath ------------------------------------------------------

struct FordKacMode {
  double k;      // stiffness
  double omega;  // frequency; bath mass k / omega^2
};

struct FordKacSpectrum {
  std::vector<FordKacMode> modes;
  void validate() const;
};

double fordkac_kernel(const FordKacSpectrum& spectrum, double t);

/// Midpoint quadrature of (2 c alpha / pi) / (alpha^2 + w^2) on [0, w_max].
FordKacSpectrum fordkac_spectrum_for_exponential(double c, double alpha, int m_modes,
                                                 double omega_max);

// -- non-equilibrium pair ----------------------------------------------------

struct NoneqBlocks {
  MatrixXd g11_1;     // n x n
  MatrixXd g12_1;     // n x mh
  MatrixXd g21_1;     // mh x n
  MatrixXd g22_1;     // mh x mh
  MatrixXd g12_2;     // n x mh
  MatrixXd g22_2;     // mh x mh
  MatrixXd sigma11_2; // n x n
  /// Defaults to the symmetric root of G22_2 + G22_2^T.
  std::optional<MatrixXd> sigma22_2;
};

struct NoneqKernels {
  MemoryKernel k1;  // dissipation
  MemoryKernel k2;  // noise covariance, delta part 2 Sigma11_2
  CoefficientField stacked;
};

NoneqKernels noneq_kernels(const NoneqBlocks& blocks);

}  // namespace qgle
