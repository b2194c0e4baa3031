#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "qgle/error.hpp"
#include "qgle/kernels.hpp"
#include "qgle/linalg.hpp"
#include "qgle/model.hpp"

using namespace qgle;
using qgle::testing::mat;

namespace {

constexpr double kPi = std::numbers::pi;

template <class F>
ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kIo;
}

CoefficientField scalar_pair(double g11, double g12, double g21, double g22, double s1,
                             double s2) {
  return CoefficientField::constant(1, 1, mat({{g11, g12}, {g21, g22}}), mat({{s1, 0}, {0, s2}}));
}

const std::vector<VectorXd> kOrigin{VectorXd::Zero(1)};

// Characteristic polynomial by Faddeev-LeVerrier, roots by Durand-Kerner.
std::vector<std::complex<double>> eigenvalues_by_polynomial(const MatrixXd& a) {
  const int d = static_cast<int>(a.rows());
  std::vector<double> c(d + 1);
  c[d] = 1.0;
  MatrixXd mk = MatrixXd::Zero(d, d);
  for (int k = 1; k <= d; ++k) {
    mk = a * mk + c[d - k + 1] * MatrixXd::Identity(d, d);
    c[d - k] = -(a * mk).trace() / k;
  }
  std::vector<std::complex<double>> z(d);
  for (int i = 0; i < d; ++i) z[i] = std::pow(std::complex<double>(0.4, 0.9), i);
  for (int it = 0; it < 2000; ++it) {
    for (int i = 0; i < d; ++i) {
      std::complex<double> p = c[d];
      for (int k = d - 1; k >= 0; --k) p = p * z[i] + c[k];
      std::complex<double> den = 1.0;
      for (int j = 0; j < d; ++j)
        if (j != i) den *= z[i] - z[j];
      z[i] -= p / den;
    }
  }
  return z;
}

}  // namespace

// -- model --------------------------------------------------------------------

TEST(DomainTest, TorusReductionIntoUnitCell) {
  VectorXd q(3);
  q << -0.25, 1.5, 3.0;
  Domain::torus(3).reduce(q);
  EXPECT_DOUBLE_EQ(q(0), 0.75);
  EXPECT_DOUBLE_EQ(q(1), 0.5);
  EXPECT_DOUBLE_EQ(q(2), 0.0);
  VectorXd r = VectorXd::Constant(1, -7.3);
  Domain::euclidean(1).reduce(r);
  EXPECT_EQ(r(0), -7.3);
}

TEST(DomainTest, RejectsZeroDimension) {
  EXPECT_THROW(Domain::torus(0), Error);
}

TEST(ForceFieldTest, SymbolicGradientMatchesFiniteDifferences) {
  const ForceField f =
      ForceField::from_potential(Expr::parse("cos(2*pi*q1)*sin(2*pi*q2) + exp(q1)/3", 2), 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<VectorXd> pts;
  for (int i = 0; i < 20; ++i) pts.push_back(VectorXd{{u(rng), u(rng)}});
  EXPECT_LE(gradient_consistency(f, pts), 1e-5);
  const VectorXd q{{0.1, 0.2}};
  EXPECT_TRUE(f(q).isApprox(-f.gradient(q)));
}

TEST(ForceFieldTest, LinearPartResidualBoundedForPerturbedQuadratic) {
  ForceField f = ForceField::from_potential(Expr::parse("q1*q1/2 + cos(q1)", 1), 1);
  f.with_linear_part(MatrixXd::Identity(1, 1));
  EXPECT_LE(linear_part_residual_bound(f, {1, 10, 100, 1000}), 1.0 + 1e-12);
}

TEST(ModelSpecTest, ValidateRejectsBadParameters) {
  auto model = qgle::testing::prony_model({{1, 1}}, true, "0");
  EXPECT_NO_THROW(model.validate());
  auto bad_beta = model;
  bad_beta.beta = 0.0;
  EXPECT_THROW(bad_beta.validate(), Error);
  auto bad_mass = model;
  bad_mass.mass = MatrixXd::Constant(1, 1, -1.0);
  EXPECT_THROW(bad_mass.validate(), Error);
  auto bad_q = model;
  bad_q.Q = MatrixXd::Zero(1, 1);
  EXPECT_THROW(bad_q.validate(), Error);
}

TEST(SolveFdtTest, DecoupledIdentity) {
  const auto sol = solve_fdt_Q(scalar_pair(1, 0, 0, 1, std::sqrt(2.0), std::sqrt(2.0)));
  EXPECT_NEAR(sol.Q(0, 0), 1.0, 1e-14);
  EXPECT_LE(sol.residual_white, 1e-14);
  EXPECT_LE(sol.residual_coupling, 1e-14);
  EXPECT_LE(sol.residual_aux, 1e-14);
}

TEST(SolveFdtTest, PureColorScalarGivesUnitQ) {
  for (double gamma : {-3.0, 0.5, 2.0}) {
    for (double alpha : {0.1, 1.0, 7.0}) {
      const auto sol = solve_fdt_Q(scalar_pair(0, -gamma, gamma, alpha, 0, std::sqrt(2 * alpha)));
      EXPECT_NEAR(sol.Q(0, 0), 1.0, 1e-12);
    }
  }
}

TEST(SolveFdtTest, InconsistentCouplingBlock) {
  EXPECT_EQ(error_kind_of([] { solve_fdt_Q(scalar_pair(0, -1, 1, 1, 0, 1)); }),
            ErrorKind::kInconsistent);
}

TEST(SolveFdtTest, SingularAuxiliaryBlock) {
  EXPECT_EQ(error_kind_of([] { solve_fdt_Q(scalar_pair(0, 0, 0, 0, 0, 1)); }),
            ErrorKind::kNoSolution);
}

TEST(SolveFdtTest, NegativeQ) {
  // G22 = -1 and Sigma2 = 1 force Q = -1/2.
  EXPECT_EQ(error_kind_of([] { solve_fdt_Q(scalar_pair(0, 0, 0, -1, 0, 1)); }),
            ErrorKind::kNotPositive);
}

TEST(SolveFdtTest, RejectsPositionDependent) {
  EXPECT_THROW(solve_fdt_Q(example_torus_coefficients(std::sqrt(2.0))), Error);
}

TEST(VerifyFdtTest, ExampleWithCorrectedNoiseOnGrid) {
  const auto coeffs = example_torus_coefficients(std::sqrt(2.0));
  const auto grid = default_grid(1, false, 101);
  ASSERT_EQ(grid.size(), 101u);
  EXPECT_LE(verify_fdt(coeffs, MatrixXd::Identity(1, 1), grid), 1e-12);
}

TEST(VerifyFdtTest, PerturbationGrowsQuadratically) {
  const auto grid = default_grid(1, false, 101);
  for (double eps : {1e-3, 1e-2, 0.1}) {
    const auto coeffs = example_torus_coefficients(std::sqrt(2.0) + eps);
    const double expected = 2 * std::sqrt(2.0) * eps + eps * eps;
    EXPECT_NEAR(verify_fdt(coeffs, MatrixXd::Identity(1, 1), grid), expected, 1e-12);
  }
}

TEST(VerifyFdtTest, DimensionMismatch) {
  const auto coeffs = scalar_pair(1, 0, 0, 1, 1, 1);
  EXPECT_THROW(verify_fdt(coeffs, MatrixXd::Identity(2, 2), kOrigin), Error);
}

TEST(PurecolorTest, Examples) {
  const auto grid = default_grid(1, false, 101);
  auto v = purecolor_check(example_torus_coefficients(1.0), MatrixXd::Identity(1, 1), grid);
  ASSERT_TRUE(v.has_value());
  EXPECT_LE(*v, 1e-15);
  v = purecolor_check(scalar_pair(0, -2, 1, 1, 0, 1), MatrixXd::Identity(1, 1), kOrigin);
  ASSERT_TRUE(v.has_value());
  EXPECT_DOUBLE_EQ(*v, 1.0);
  EXPECT_FALSE(
      purecolor_check(scalar_pair(1, -2, 1, 1, 0, 1), MatrixXd::Identity(1, 1), kOrigin));
}

TEST(StabilityMarginTest, Examples) {
  EXPECT_DOUBLE_EQ(stability_margin(scalar_pair(1, 0, 0, 1, 0, 0), kOrigin), 1.0);
  EXPECT_NEAR(stability_margin(example_torus_coefficients(1.0), default_grid(1, false, 101)), 0.5,
              1e-12);
  EXPECT_DOUBLE_EQ(stability_margin(scalar_pair(-1, 0, 0, 1, 0, 0), kOrigin), -1.0);
}

TEST(GibbsLogDensityTest, Examples) {
  auto model = qgle::testing::prony_model({{1, 1}}, false, "0");
  const auto x = [](double q, double p, double s) {
    return ExtendedState{VectorXd::Constant(1, q), VectorXd::Constant(1, p),
                         VectorXd::Constant(1, s), 0.0};
  };
  EXPECT_EQ(gibbs_log_density(x(0, 0, 0), model), 0.0);
  EXPECT_DOUBLE_EQ(gibbs_log_density(x(0, 1, 0), model), -0.5);
  auto harmonic = qgle::testing::prony_model({{1, 1}}, false, "q1*q1/2", 2.0);
  EXPECT_DOUBLE_EQ(gibbs_log_density(x(1, 0, 0), harmonic), -1.0);
}

TEST(GibbsLogDensityTest, NonConservativeForceRejected) {
  auto model = qgle::testing::prony_model({{1, 1}}, false, "0");
  model.force = ForceField::from_components({Expr::constant(1.0)});
  const ExtendedState x{VectorXd::Zero(1), VectorXd::Zero(1), VectorXd::Zero(1), 0.0};
  EXPECT_EQ(error_kind_of([&] { gibbs_log_density(x, model); }), ErrorKind::kNonConservative);
}

TEST(GibbsLogDensityTest, TorusShiftInvariance) {
  auto model = qgle::testing::prony_model({{1, 1}, {2, 3}}, true, "cos(2*pi*q1) + sin(4*pi*q1)");
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int i = 0; i < 100; ++i) {
    ExtendedState x{VectorXd::Constant(1, g(rng)), VectorXd::Constant(1, g(rng)),
                    VectorXd{{g(rng), g(rng)}}, 0.0};
    ExtendedState y = x;
    y.q(0) += 1.0;
    EXPECT_NEAR(gibbs_log_density(x, model), gibbs_log_density(y, model), 1e-12);
  }
}

TEST(DefaultGridTest, Sizes) {
  EXPECT_EQ(default_grid(1, true).size(), 1u);
  EXPECT_EQ(default_grid(1, false).size(), 101u);
  EXPECT_EQ(default_grid(2, false).size(), 441u);
  const auto g = default_grid(1, false, 5);
  EXPECT_DOUBLE_EQ(g.front()(0), 0.0);
  EXPECT_DOUBLE_EQ(g.back()(0), 1.0);
}

// -- FDT and stability properties of random Prony systems ------------------------

class RandomPronyTest : public ::testing::TestWithParam<int> {};

TEST_P(RandomPronyTest, FdtRoundTripPurecolorAndSpectrum) {
  std::mt19937_64 rng(100 + GetParam());
  std::uniform_real_distribution<double> u(0.1, 5.0);
  const int n_modes = 1 + GetParam() % 3;
  const int n = 1 + GetParam() % 2;
  std::vector<PronyMode> modes;
  for (int i = 0; i < n_modes; ++i) modes.push_back({u(rng), u(rng)});
  const auto sys = coeffs_from_prony(modes, n);
  const auto sol = solve_fdt_Q(sys.coeffs);
  EXPECT_LE(verify_fdt(sys.coeffs, sol.Q, {VectorXd::Zero(n)}), 1e-10);
  EXPECT_LE((sol.Q - MatrixXd::Identity(n_modes * n, n_modes * n)).cwiseAbs().maxCoeff(), 1e-10);
  const auto pc = purecolor_check(sys.coeffs, sol.Q, {VectorXd::Zero(n)});
  ASSERT_TRUE(pc.has_value());
  EXPECT_LE(*pc, 1e-10);

  if (n == 1) {
    double oracle = INFINITY;
    for (const auto& z : eigenvalues_by_polynomial(sys.coeffs.gamma()))
      oracle = std::min(oracle, z.real());
    EXPECT_NEAR(stability_margin(sys.coeffs, {VectorXd::Zero(1)}), oracle, 1e-9);
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomPronyTest, ::testing::Range(0, 12));

TEST(PronyStabilityTest, MarginIsNotMinAlphaForStrongCoupling) {
  // lambda^2 - alpha lambda + c = 0 has real part alpha/2 when 4c > alpha^2.
  const auto sys = coeffs_from_prony({{1.0, 1.0}});
  EXPECT_NEAR(stability_margin(sys.coeffs, kOrigin), 0.5, 1e-12);
  // Weak coupling: roots (alpha +- sqrt(alpha^2 - 4c)) / 2.
  const auto weak = coeffs_from_prony({{0.01, 1.0}});
  EXPECT_NEAR(stability_margin(weak.coeffs, kOrigin), (1.0 - std::sqrt(1.0 - 0.04)) / 2, 1e-12);
}

// -- kernels --------------------------------------------------------------------

TEST(KernelEvalTest, MatrixExpExample) {
  for (double alpha : {0.5, 2.0}) {
    const auto k = MemoryKernel::matrix_exp(MatrixXd::Zero(1, 1), mat({{-1}}), mat({{alpha}}),
                                            mat({{1}}));
    EXPECT_DOUBLE_EQ(kernel_eval(k, 0.0)(0, 0), 1.0);
    EXPECT_NEAR(kernel_eval(k, 1.5)(0, 0), std::exp(-alpha * 1.5), 1e-14);
  }
}

TEST(KernelEvalTest, PronySingleMode) {
  const auto k = MemoryKernel::prony(1, {{2.0, 3.0}});
  EXPECT_DOUBLE_EQ(kernel_eval(k, 0.0)(0, 0), 2.0);
  EXPECT_NEAR(kernel_eval(k, std::log(2.0) / 3)(0, 0), 1.0, 1e-15);
}

TEST(KernelEvalTest, PronyDiagonalEmbedding) {
  const auto k = MemoryKernel::prony(3, {{2.0, 1.0}});
  const MatrixXd v = kernel_eval(k, 1.0);
  EXPECT_TRUE(v.isApprox(2.0 * std::exp(-1.0) * MatrixXd::Identity(3, 3)));
}

TEST(KernelEvalTest, ZeroCoupling) {
  const auto k = MemoryKernel::matrix_exp(MatrixXd::Zero(1, 1), mat({{0}}), mat({{1}}), mat({{1}}));
  for (double t : {0.0, 0.3, 10.0}) EXPECT_EQ(kernel_eval(k, t)(0, 0), 0.0);
}

TEST(KernelEvalTest, NegativeLagRejected) {
  EXPECT_THROW(kernel_eval(MemoryKernel::prony(1, {{1, 1}}), -0.1), Error);
}

TEST(KernelEvalTest, DeltaPartFromCoefficients) {
  const auto coeffs = scalar_pair(0.7, -1, 1, 2, 0, 2);
  const auto k = kernel_from_coeffs(coeffs);
  EXPECT_DOUBLE_EQ(k.delta_part()(0, 0), 0.7);
  EXPECT_NEAR(kernel_eval(k, 1.0)(0, 0), std::exp(-2.0), 1e-14);
}

TEST(NoiseCovarianceTest, MatchesKernelOverBetaForPronySystems) {
  const auto sys = coeffs_from_prony({{1.0, 0.5}, {3.0, 2.0}}, 2);
  const auto k = kernel_from_coeffs(sys.coeffs);
  for (double beta : {0.5, 2.0}) {
    for (double tau = 0.0; tau <= 5.0; tau += 0.25) {
      const MatrixXd diff = noise_covariance_eval(sys.coeffs, sys.Q, beta, tau) -
                            kernel_eval(k, tau) / beta;
      EXPECT_LE(diff.cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(NoiseCovarianceTest, DecaysAndScalarExample) {
  const auto sys = coeffs_from_prony({{2.0, 0.7}});
  const double margin = stability_margin(sys.coeffs, kOrigin);
  // The coloured block decays at rate alpha, faster than 30/margin demands.
  EXPECT_LE(noise_covariance_eval(sys.coeffs, sys.Q, 1.0, 30.0 / margin).norm(), 1e-10);
  const auto c = scalar_pair(0, -1, 1, 1, 0, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(noise_covariance_eval(c, MatrixXd::Identity(1, 1), 2.0, 0.0)(0, 0), 0.5);
}

TEST(NoiseCovarianceTest, PsdAtZeroLag) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd gamma = MatrixXd::Random(5, 5);
    gamma.bottomRightCorner(3, 3) = MatrixXd::Identity(3, 3) * 3.0;
    MatrixXd a = MatrixXd::NullaryExpr(3, 3, [&] { return g(rng); });
    const MatrixXd q = a * a.transpose() + MatrixXd::Identity(3, 3);
    const auto coeffs = CoefficientField::constant(2, 3, gamma, MatrixXd::Zero(5, 5));
    const MatrixXd c0 = noise_covariance_eval(coeffs, q, 1.0, 0.0);
    EXPECT_LE((c0 - c0.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(c0).eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(CoeffsFromPronyTest, SingleModeBlocks) {
  const auto sys = coeffs_from_prony({{1.0, 1.0}});
  EXPECT_TRUE(sys.coeffs.gamma().isApprox(mat({{0, -1}, {1, 1}})));
  EXPECT_NEAR(sys.coeffs.sigma()(1, 1), std::sqrt(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(sys.coeffs.sigma()(0, 0), 0.0);
  EXPECT_NEAR(kernel_eval(kernel_from_coeffs(sys.coeffs), 1.0)(0, 0), std::exp(-1.0), 1e-14);
  EXPECT_LE(verify_fdt(sys.coeffs, sys.Q, kOrigin), 1e-12);
}

TEST(CoeffsFromPronyTest, TwoModesSumAtZero) {
  const auto sys = coeffs_from_prony({{1, 1}, {4, 2}});
  EXPECT_NEAR(kernel_eval(kernel_from_coeffs(sys.coeffs), 0.0)(0, 0), 5.0, 1e-14);
}

TEST(CoeffsFromPronyTest, RejectsNonPositiveModes) {
  EXPECT_THROW(coeffs_from_prony({{0.0, 1.0}}), Error);
  EXPECT_THROW(coeffs_from_prony({{1.0, -1.0}}), Error);
}

TEST(CoeffsFromPronyTest, KernelRoundTripOnLagGrid) {
  const std::vector<PronyMode> modes{{0.5, 0.3}, {2.0, 1.7}, {1.1, 4.0}};
  for (int n : {1, 2}) {
    const auto k = kernel_from_coeffs(coeffs_from_prony(modes, n).coeffs);
    for (int i = 0; i <= 50; ++i) {
      const double tau = 0.1 * i;
      double sum = 0.0;
      for (const auto& m : modes) sum += m.c * std::exp(-m.alpha * tau);
      EXPECT_LE((kernel_eval(k, tau) - sum * MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(),
                1e-10);
    }
  }
}

TEST(SpectralDensityTest, ValueSymmetryAndIntegral) {
  const auto k = MemoryKernel::prony(1, {{1, 1}});
  EXPECT_NEAR(spectral_density(k, 0.0), 1.0 / kPi, 1e-15);
  EXPECT_EQ(spectral_density(k, 2.5), spectral_density(k, -2.5));
  // Simpson on [-100, 100]; the exact value is 2 arctan(100) / pi.
  const int n = 200000;
  const double h = 200.0 / n;
  double s = spectral_density(k, -100) + spectral_density(k, 100);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * spectral_density(k, -100 + i * h);
  EXPECT_NEAR(s * h / 3, 1.0, 1e-2);
  EXPECT_NEAR(s * h / 3, 2 * std::atan(100.0) / kPi, 1e-9);
}

TEST(SpectralDensityTest, PositiveAtRandomWavenumbers) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  std::cauchy_distribution<double> k_dist(0.0, 10.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto k = MemoryKernel::prony(1, {{u(rng), u(rng)}, {u(rng), u(rng)}});
    for (int i = 0; i < 1000; ++i) EXPECT_GT(spectral_density(k, k_dist(rng)), 0.0);
  }
}

TEST(SpectralDensityTest, RejectsMatrixExpKernel) {
  const auto k = MemoryKernel::matrix_exp(MatrixXd::Zero(1, 1), mat({{-1}}), mat({{1}}), mat({{1}}));
  EXPECT_THROW(spectral_density(k, 0.0), Error);
}

TEST(FordKacKernelTest, Examples) {
  FordKacSpectrum s{{{1.0, 2.0}, {3.0, 0.5}}};
  EXPECT_DOUBLE_EQ(fordkac_kernel(s, 0.0), 4.0);
  EXPECT_NEAR(fordkac_kernel(FordKacSpectrum{{{1.0, kPi}}}, 1.0), -1.0, 1e-15);
  EXPECT_EQ(fordkac_kernel(FordKacSpectrum{}, 3.0), 0.0);
  for (double t : {0.1, 1.7, 42.0}) EXPECT_EQ(fordkac_kernel(s, t), fordkac_kernel(s, -t));
}

TEST(FordKacKernelTest, SpectrumValidation) {
  EXPECT_THROW((FordKacSpectrum{{{0.0, 1.0}}}.validate()), Error);
  EXPECT_THROW((FordKacSpectrum{{{1.0, -1.0}}}.validate()), Error);
  EXPECT_THROW(fordkac_spectrum_for_exponential(1, 1, 0, 10), Error);
  EXPECT_THROW(fordkac_spectrum_for_exponential(1, 1, 4, -1), Error);
}

TEST(FordKacSpectrumTest, MidpointWeights) {
  const auto s = fordkac_spectrum_for_exponential(2.0, 0.5, 4, 8.0);
  ASSERT_EQ(s.modes.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    const double w = 2.0 * i + 1.0;
    EXPECT_DOUBLE_EQ(s.modes[i].omega, w);
    EXPECT_NEAR(s.modes[i].k, (2 * 2.0 * 0.5 / kPi) / (0.25 + w * w) * 2.0, 1e-15);
  }
}

TEST(FordKacSpectrumTest, ZeroLagWithinTailBound) {
  const auto s = fordkac_spectrum_for_exponential(1.0, 1.0, 400, 50.0);
  EXPECT_LE(std::abs(fordkac_kernel(s, 0.0) - 1.0), 0.02);
}

TEST(FordKacSpectrumTest, SingleModeCannotMatch) {
  const auto s = fordkac_spectrum_for_exponential(1.0, 1.0, 1, 20.0);
  double sup = 0.0;
  for (int i = 0; i <= 500; ++i) {
    const double t = 0.01 * i;
    sup = std::max(sup, std::abs(fordkac_kernel(s, t) - std::exp(-t)));
  }
  EXPECT_GT(sup, 0.1);
}

TEST(FordKacSpectrumTest, RefinementReducesQuadratureError) {
  // The reference is the cosine transform truncated at w_max, by fine Simpson
  // quadrature; the remaining tail 2/(pi w_max) is the same for every m.
  const double w_max = 20.0;
  std::vector<double> ts, truncated;
  for (int i = 0; i <= 250; ++i) {
    const double t = 0.02 * i;
    const int n = 20000;
    const double h = w_max / n;
    auto f = [&](double w) { return (2 / kPi) * std::cos(w * t) / (1 + w * w); };
    double s = f(0) + f(w_max);
    for (int j = 1; j < n; ++j) s += (j % 2 ? 4 : 2) * f(j * h);
    ts.push_back(t);
    truncated.push_back(s * h / 3);
  }
  double prev = INFINITY;
  for (int m : {16, 32, 64, 128, 256}) {
    const auto spec = fordkac_spectrum_for_exponential(1.0, 1.0, m, w_max);
    double sup = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i)
      sup = std::max(sup, std::abs(fordkac_kernel(spec, ts[i]) - truncated[i]));
    EXPECT_LT(sup, prev) << "m = " << m;
    prev = sup;
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(FordKacSpectrumTest, ErrorAgainstExponentialSaturatesAtTail) {
  const double w_max = 20.0;
  const double tail = 2 / (kPi * w_max);
  for (int m : {64, 256}) {
    const auto spec = fordkac_spectrum_for_exponential(1.0, 1.0, m, w_max);
    double sup = 0.0;
    for (int i = 0; i <= 500; ++i) {
      const double t = 0.01 * i;
      sup = std::max(sup, std::abs(fordkac_kernel(spec, t) - std::exp(-t)));
    }
    EXPECT_NEAR(sup, tail, 2e-3) << "m = " << m;
  }
}

TEST(NoneqKernelsTest, EquilibriumChoiceGivesEqualKernels) {
  NoneqBlocks b;
  b.g11_1 = MatrixXd::Zero(1, 1);
  b.g12_1 = mat({{-1.5, -0.5}});
  b.g21_1 = -b.g12_1.transpose();
  b.g22_1 = mat({{1.0, 0.2}, {-0.2, 2.0}});
  b.g12_2 = b.g12_1;
  b.g22_2 = b.g22_1;
  b.sigma11_2 = MatrixXd::Zero(1, 1);
  const auto k = noneq_kernels(b);
  for (double t : {0.0, 0.4, 1.0, 3.0})
    EXPECT_LE((kernel_eval(k.k1, t) - kernel_eval(k.k2, t)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(k.stacked.size(), 1 + 2 * 2);
}

TEST(NoneqKernelsTest, K2PsdAtZeroWithSymmetricG22) {
  NoneqBlocks b;
  b.g11_1 = MatrixXd::Zero(2, 2);
  b.g12_1 = MatrixXd::Zero(2, 3);
  b.g21_1 = MatrixXd::Zero(3, 2);
  b.g22_1 = MatrixXd::Identity(3, 3);
  b.g12_2 = MatrixXd::Random(2, 3);
  b.g22_2 = mat({{2, 0.5, 0}, {0.5, 1, 0}, {0, 0, 3}});
  b.sigma11_2 = MatrixXd::Zero(2, 2);
  const MatrixXd k0 = kernel_eval(noneq_kernels(b).k2, 0.0);
  EXPECT_LE((k0 - k0.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(k0).eigenvalues().minCoeff(), -1e-14);
}

TEST(NoneqKernelsTest, PureWhiteNoisePair) {
  NoneqBlocks b;
  b.g11_1 = MatrixXd::Zero(1, 1);
  b.g12_1 = MatrixXd::Zero(1, 1);
  b.g21_1 = MatrixXd::Zero(1, 1);
  b.g22_1 = MatrixXd::Identity(1, 1);
  b.g12_2 = MatrixXd::Zero(1, 1);
  b.g22_2 = MatrixXd::Identity(1, 1);
  b.sigma11_2 = mat({{0.8}});
  const auto k = noneq_kernels(b);
  EXPECT_EQ(kernel_eval(k.k1, 0.5)(0, 0), 0.0);
  EXPECT_EQ(kernel_eval(k.k2, 0.5)(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(k.k2.delta_part()(0, 0), 1.6);
}

TEST(NoneqKernelsTest, UnstableBlockRejected) {
  NoneqBlocks b;
  b.g11_1 = MatrixXd::Zero(1, 1);
  b.g12_1 = MatrixXd::Zero(1, 1);
  b.g21_1 = MatrixXd::Zero(1, 1);
  b.g22_1 = mat({{-1}});
  b.g12_2 = MatrixXd::Zero(1, 1);
  b.g22_2 = MatrixXd::Identity(1, 1);
  b.sigma11_2 = MatrixXd::Zero(1, 1);
  EXPECT_THROW(noneq_kernels(b), Error);
}
