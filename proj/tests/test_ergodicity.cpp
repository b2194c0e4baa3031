#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "qgle/ergodicity.hpp"
#include "qgle/error.hpp"
#include "qgle/kernels.hpp"
#include "qgle/linalg.hpp"

using namespace qgle;
using qgle::testing::mat;

namespace {

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

double min_eig(const MatrixXd& a) {
  return Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (a + a.transpose())).eigenvalues()(0);
}

const MatrixXd kExampleC = mat({{19.0 / 18, -1.0 / 6}, {-1.0 / 6, 1.0}});

}  // namespace

// -- Schur complements --------------------------------------------------------

TEST(SchurTest, IdentityBlocks) {
  const auto r = schur_psd(MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 3), MatrixXd::Identity(3, 3));
  EXPECT_TRUE(r.pd);
  EXPECT_TRUE(r.psd);
  EXPECT_NEAR(r.margin, 1.0, 1e-14);
}

TEST(SchurTest, ZeroCornerWithCoupling) {
  const auto r = schur_psd(mat({{0}}), mat({{0.5, 0.0}}), mat({{2, 0}, {0, 1}}));
  EXPECT_FALSE(r.psd);
  EXPECT_FALSE(r.pd);
  EXPECT_LT(r.margin, 0.0);
}

TEST(SchurTest, RangeConditionWithSingularCorner) {
  const auto r = schur_psd(mat({{1}}), mat({{0, 1}}), mat({{1, 0}, {0, 0}}));
  EXPECT_FALSE(r.psd);
  // Coupling inside range(A22) with a non-negative complement stays PSD.
  const auto ok = schur_psd(mat({{1}}), mat({{1, 0}}), mat({{1, 0}, {0, 0}}));
  EXPECT_TRUE(ok.psd);
  EXPECT_FALSE(ok.pd);
}

TEST(SchurTest, AgreesWithEigenvaluesOnRandomMatrices) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    const MatrixXd b = MatrixXd::NullaryExpr(4, 4, [&] { return g(rng); });
    MatrixXd a = b * b.transpose() - (trial % 3) * 0.5 * MatrixXd::Identity(4, 4);
    const auto r = schur_psd(a.topLeftCorner(2, 2), a.topRightCorner(2, 2), a.bottomRightCorner(2, 2));
    const double lo = min_eig(a);
    EXPECT_NEAR(r.margin, lo, 1e-10);
    if (std::abs(lo) > 1e-8) {
      EXPECT_EQ(r.pd, lo > 0);
      EXPECT_EQ(r.psd, lo > 0);
    }
  }
}

TEST(SchurTest, RejectsAsymmetricDiagonal) {
  EXPECT_THROW(schur_psd(mat({{1, 2}, {0, 1}}), MatrixXd::Zero(2, 1), mat({{1}})), Error);
}

// -- Hoermander ---------------------------------------------------------------

TEST(HormanderTest, PronyModeIII) {
  const auto sys = coeffs_from_prony({{1, 1}, {2, 3}}, 2);
  const auto c = hormander_const_check(sys.coeffs.gamma(), sys.coeffs.sigma(), 2, HormanderMode::kIII);
  EXPECT_TRUE(c.satisfied);
  EXPECT_EQ(c.constants.at("rank_sigma2"), 4);
  EXPECT_EQ(c.constants.at("rank_gamma12"), 2);
}

TEST(HormanderTest, DecoupledAuxiliaryNoiseFails) {
  // G12 = 0, Sigma1 = 0: noise never reaches (q, p).
  const MatrixXd gamma = mat({{1, 0}, {0.5, 1}});
  const MatrixXd sigma = mat({{0, 0}, {0, 1}});
  for (auto mode : {HormanderMode::kII, HormanderMode::kIII}) {
    const auto c = hormander_const_check(gamma, sigma, 1, mode);
    EXPECT_FALSE(c.satisfied);
  }
  const MatrixXd h = mat({{1}});
  const auto ci = hormander_const_check(gamma, sigma, 1, HormanderMode::kI, &h);
  EXPECT_FALSE(ci.satisfied);
  EXPECT_EQ(ci.constants.at("achieved_rank"), 1);
  EXPECT_EQ(ci.constants.at("required_rank"), 3);
  EXPECT_LT(ci.margin, 0);
}

TEST(HormanderTest, FullRankDiffusionModeII) {
  const auto c = hormander_const_check(mat({{1, 0.3}, {-0.3, 2}}), mat({{1, 0}, {0.2, 1}}), 1,
                                       HormanderMode::kII);
  EXPECT_TRUE(c.satisfied);
  EXPECT_EQ(c.margin, 0.0);
}

TEST(HormanderTest, ModeINeedsLinearPart) {
  const auto sys = coeffs_from_prony({{1, 1}});
  EXPECT_THROW(hormander_const_check(sys.coeffs.gamma(), sys.coeffs.sigma(), 1, HormanderMode::kI),
               Error);
  const MatrixXd h = mat({{1}});
  EXPECT_TRUE(
      hormander_const_check(sys.coeffs.gamma(), sys.coeffs.sigma(), 1, HormanderMode::kI, &h)
          .satisfied);
}

TEST(HormanderTest, ModeIIIImpliesModeIIOnRandomPronySystems) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.05, 4.0);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 3;
    std::vector<PronyMode> modes;
    for (int i = 0; i < 1 + trial % 4; ++i) modes.push_back({u(rng), u(rng)});
    const auto sys = coeffs_from_prony(modes, n);
    if (!hormander_const_check(sys.coeffs.gamma(), sys.coeffs.sigma(), n, HormanderMode::kIII)
             .satisfied)
      continue;
    ++checked;
    EXPECT_TRUE(
        hormander_const_check(sys.coeffs.gamma(), sys.coeffs.sigma(), n, HormanderMode::kII)
            .satisfied)
        << "trial " << trial;
  }
  EXPECT_EQ(checked, 50);
}

// -- Lyapunov matrices --------------------------------------------------------

TEST(LyapunovMatrixTest, IdentityGamma) {
  const auto lm = lyapunov_matrix_const(MatrixXd::Identity(3, 3));
  EXPECT_LE((lm.C - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(lm.lambda, 2.0, 1e-12);
}

TEST(LyapunovMatrixTest, PronyGammaResidualByMultiplication) {
  const MatrixXd g = mat({{0, -1}, {1, 1}});
  const auto lm = lyapunov_matrix_const(g);
  const MatrixXd r = g.transpose() * lm.C + lm.C * g - lm.lambda * MatrixXd::Identity(2, 2);
  EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(min_eig(lm.C), 1.0, 1e-12);
  EXPECT_LE((lm.C - lm.C.transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(LyapunovMatrixTest, CustomRightHandSide) {
  const MatrixXd g = mat({{0, -2, 0}, {2, 1, 0.5}, {0, -0.5, 3}});
  const MatrixXd rhs = mat({{2, 0.1, 0}, {0.1, 1, 0}, {0, 0, 3}});
  const auto lm = lyapunov_matrix_const(g, rhs);
  EXPECT_LE((g.transpose() * lm.C + lm.C * g - lm.lambda * rhs).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(LyapunovMatrixTest, UnstableGamma) {
  EXPECT_EQ(error_kind_of([] { lyapunov_matrix_const(mat({{-1, 0}, {0, 1}})); }),
            ErrorKind::kUnstable);
}

// -- drift --------------------------------------------------------------------

TEST(DriftTest, TorusPronyFeasible) {
  const auto model = qgle::testing::prony_model({{1, 1}}, true, "cos(2*pi*q1)");
  const auto lm = lyapunov_matrix_const(model.coeffs.gamma());
  // The force scale 2 pi needs |z| well beyond 20 before damping dominates.
  const auto samples = drift_samples(model, 4096, 100.0);
  EXPECT_EQ(samples.size(), 4096u);
  for (int l : {1, 2}) {
    const auto dc = lyapunov_drift_constants(model, lm.C, l, samples);
    EXPECT_GT(dc.a, 0.0);
    EXPECT_LE(dc.fd_max_rel_error, 1e-6);
    const auto k = LyapunovFunction::torus(lm.C, 1, l);
    for (const auto& x : samples)
      EXPECT_LE(k.generator(model, x), -dc.a * k.value(model, x) + dc.b + 1e-9);
  }
}

TEST(DriftTest, RateGrowsWithSampleRadius) {
  const auto model = qgle::testing::prony_model({{1, 1}}, true, "cos(2*pi*q1)");
  const auto lm = lyapunov_matrix_const(model.coeffs.gamma());
  double prev = 0.0;
  for (double radius : {20.0, 50.0, 100.0, 200.0}) {
    const double a = lyapunov_drift_constants(model, lm.C, 1, drift_samples(model, 4096, radius)).a;
    EXPECT_GT(a, prev) << radius;
    prev = a;
  }
  // The rate approaches lambda / max eig(C) for large radii.
  EXPECT_LT(prev, lm.lambda / lm.C.eigenvalues().real().maxCoeff() + 1e-9);
}

TEST(DriftTest, NoDissipationInfeasible) {
  const auto model = qgle::testing::constant_model(true, MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 2),
                                                   1, "0");
  const auto samples = drift_samples(model, 512);
  const auto k = LyapunovFunction::torus(MatrixXd::Identity(2, 2), 1, 1);
  for (const auto& x : samples) EXPECT_EQ(k.generator(model, x), 0.0);
  EXPECT_EQ(error_kind_of([&] { lyapunov_drift_constants(model, MatrixXd::Identity(2, 2), 1, samples); }),
            ErrorKind::kInfeasible);
}

TEST(DriftTest, ShapeMismatchRejected) {
  const auto model = qgle::testing::prony_model({{1, 1}}, true, "0");
  const auto samples = drift_samples(model, 64);
  EXPECT_EQ(error_kind_of([&] {
              lyapunov_drift_constants(model, MatrixXd::Identity(3, 3), 1, samples);
            }),
            ErrorKind::kPrecondition);
}

TEST(DriftTest, GeneratorMatchesFiniteDifferences) {
  const auto model =
      qgle::testing::prony_model({{1, 0.7}, {2, 1.5}}, true, "cos(2*pi*q1) + 0.3*sin(4*pi*q1)", 1.5);
  const auto lm = lyapunov_matrix_const(model.coeffs.gamma());
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int l : {1, 2, 3}) {
    const auto k = LyapunovFunction::torus(lm.C, 1, l);
    for (int i = 0; i < 3; ++i) {
      const ExtendedState x{VectorXd::Constant(1, g(rng)), VectorXd::Constant(1, g(rng)),
                            VectorXd{{g(rng), g(rng)}}, 0.0};
      const double exact = k.generator(model, x);
      EXPECT_NEAR(k.generator_fd(model, x), exact, 1e-6 * std::max(1.0, std::abs(exact)));
    }
  }
}

TEST(DriftTest, GeneratorAgainstHandComputedOuValue) {
  // K = z^T C z + 1 with C = I and scalar Prony coefficients:
  // LK = 2 p F - 2 (p, s) Gamma (p, s)^T + tr(Sigma Sigma^T) / beta.
  const auto model = qgle::testing::prony_model({{1, 1}}, true, "cos(2*pi*q1)", 2.0);
  const auto k = LyapunovFunction::torus(MatrixXd::Identity(2, 2), 1, 1);
  const ExtendedState x{VectorXd::Constant(1, 0.1), VectorXd::Constant(1, 0.8),
                        VectorXd::Constant(1, -0.3), 0.0};
  const double force = 2 * M_PI * std::sin(2 * M_PI * 0.1);
  const double expected = 2 * 0.8 * force - 2 * (-0.3 * -0.3 * 1.0) + 2.0 / 2.0;
  EXPECT_NEAR(k.generator(model, x), expected, 1e-12);
}

TEST(DriftTest, EuclideanFamilyWithUnboundedWitness) {
  const auto model = qgle::testing::prony_model({{1, 1}}, false, "q1*q1/2 + 0.1*cos(q1)");
  const MatrixXd gamma = model.coeffs.gamma();
  const auto cert = unbounded_certificate(gamma, *model.Q, 1, {1.0, 0.1, 60});
  ASSERT_TRUE(cert.satisfied);
  const auto k = LyapunovFunction::euclidean(gamma.bottomLeftCorner(1, 1), MatrixXd::Identity(1, 1),
                                             cert.constants.at("A"), cert.constants.at("B"), 1.0,
                                             -0.1, 1);
  const auto samples = drift_samples(model, 2048, 10.0);
  const auto dc = lyapunov_drift_constants(model, k, samples);
  EXPECT_GT(dc.a, 0.0);
  EXPECT_LE(dc.fd_max_rel_error, 1e-6);
}

TEST(LyapunovConstCertificateTest, TorusProny) {
  const auto model = qgle::testing::prony_model({{1, 1}, {0.5, 3}}, true, "cos(2*pi*q1)");
  const auto cert = lyapunov_const_certificate(model, 1, 1024);
  EXPECT_TRUE(cert.satisfied);
  EXPECT_GT(cert.constants.at("a"), 0.0);
  EXPECT_EQ(cert.kind, CertificateKind::kLyapunovConst);
}

// -- unbounded ----------------------------------------------------------------

TEST(UnboundedTest, FullRankWhiteBlock) {
  const MatrixXd gamma = mat({{1, 0}, {0, 1}});
  const auto cert = unbounded_certificate(gamma, mat({{1}}), 1, {});
  ASSERT_TRUE(cert.satisfied);
  EXPECT_EQ(cert.constants.at("A"), 0.0);
  const double b = cert.constants.at("B");
  EXPECT_GT(min_eig(unbounded_c_hat(gamma, mat({{1}}), 1, 0.0, b)), 0.0);
  EXPECT_GT(min_eig(unbounded_r_hat(gamma, mat({{1}}), 1, 0.0, b, 1.0)), 0.0);
}

TEST(UnboundedTest, PureColorBranchReverified) {
  const MatrixXd gamma = mat({{0, -1}, {1, 1}});
  UnboundedParams p;
  p.e = 1.0;
  p.h_bar = 1.0;
  const auto cert = unbounded_certificate(gamma, mat({{1}}), 1, p);
  ASSERT_TRUE(cert.satisfied);
  const double a = cert.constants.at("A");
  const double b = cert.constants.at("B");
  EXPECT_GT(a * 1.0 - 1.0, 0.0);
  EXPECT_GT(min_eig(unbounded_c_hat(gamma, mat({{1}}), 1, a, b)), 0.0);
  MatrixXd r = unbounded_r_hat(gamma, mat({{1}}), 1, a, b, 1.0);
  for (double sign : {1.0, -1.0}) {
    MatrixXd rs = r;
    rs(0, 2) += sign * a * p.h_bar;
    EXPECT_GT(min_eig(rs), 0.0);
  }
}

TEST(UnboundedTest, SingularCouplingExhausts) {
  const MatrixXd gamma = mat({{0, 0}, {0, 1}});
  const ErrorKind k = error_kind_of([&] { unbounded_certificate(gamma, mat({{1}}), 1, {}); });
  EXPECT_TRUE(k == ErrorKind::kSearchExhausted || k == ErrorKind::kPrecondition);
}

// -- position dependent -------------------------------------------------------

TEST(PosdepTest, ExampleEigenvaluesAndMargin) {
  const auto coeffs = example_torus_coefficients(1.0);
  const auto grid = default_grid(1, false, 1001);
  const auto v = posdep_certificate_verify(coeffs, kExampleC, grid);
  ASSERT_EQ(v.table.size(), 1001u);
  const double lo = 1.0 - std::sqrt(37.0) / 9.0;
  EXPECT_NEAR(v.margin, lo, 1e-12);
  EXPECT_NEAR(v.table.front().eigenvalues(0), 1.0, 1e-12);
  EXPECT_NEAR(v.table.front().eigenvalues(1), 1.0, 1e-12);
  EXPECT_NEAR(v.table[500].q(0), 0.5, 1e-15);
  EXPECT_NEAR(v.table[500].eigenvalues(0), lo, 1e-12);
  EXPECT_NEAR(v.table[500].eigenvalues(1), 1.0 + std::sqrt(37.0) / 9.0, 1e-12);
  for (const auto& row : v.table) {
    EXPECT_GT(row.eigenvalues(0), 0.0);
    EXPECT_GT(row.eigenvalues(1), 0.0);
  }
}

TEST(PosdepTest, ClosedFormMatrixAtEveryGridPoint) {
  const auto coeffs = example_torus_coefficients(1.0);
  const auto grid = default_grid(1, false, 101);
  const auto v = posdep_certificate_verify(coeffs, kExampleC, grid);
  for (const auto& row : v.table) {
    const double g = 2.0 + std::cos(2 * M_PI * row.q(0));
    const MatrixXd r = mat({{g / 3, g / 18 - 1.0 / 6}, {g / 18 - 1.0 / 6, 2 - g / 3}});
    const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<MatrixXd>(r).eigenvalues();
    EXPECT_NEAR(row.eigenvalues(0), ev(0), 1e-12);
    EXPECT_NEAR(row.eigenvalues(1), ev(1), 1e-12);
  }
}

TEST(PosdepTest, ConstantCoefficientsMatchDirectEigenvalue) {
  const auto sys = coeffs_from_prony({{1, 1}, {3, 2}});
  const MatrixXd g = sys.coeffs.gamma();
  MatrixXd c = MatrixXd::Identity(3, 3);
  c(0, 1) = c(1, 0) = 0.2;
  const auto v = posdep_certificate_verify(sys.coeffs, c, {VectorXd::Zero(1)});
  EXPECT_NEAR(v.margin, min_eig(g * c + c * g.transpose()), 1e-10);
}

TEST(PosdepTest, SearchFindsCertificateForExample) {
  const auto coeffs = example_torus_coefficients(1.0);
  const auto grid = default_grid(1, false, 101);
  const MatrixXd c = posdep_certificate_search(coeffs, grid);
  EXPECT_GT(min_eig(c), 0.0);
  EXPECT_GT(posdep_certificate_verify(coeffs, c, grid).margin, 0.0);
}

TEST(PosdepTest, SearchOnConstantCoefficientsSolvesLyapunov) {
  const auto sys = coeffs_from_prony({{1, 1}});
  const MatrixXd c = posdep_certificate_search(sys.coeffs, {VectorXd::Zero(1)});
  const MatrixXd g = sys.coeffs.gamma();
  const MatrixXd r = g * c + c * g.transpose();
  EXPECT_GT(min_eig(r), 0.0);
  // Proportional to the Lyapunov solution of the transposed problem.
  const auto lm = lyapunov_matrix_const(g.transpose());
  const double ratio = c(0, 0) / lm.C(0, 0);
  EXPECT_LE((c - ratio * lm.C).cwiseAbs().maxCoeff(), 1e-8 * c.cwiseAbs().maxCoeff());
}

TEST(PosdepTest, SearchFailsWhenUnstableSomewhere) {
  std::vector<Expr> gamma{Expr::constant(0), Expr::constant(-1), Expr::constant(1),
                          Expr::parse("2*cos(2*pi*q1)", 1)};
  std::vector<Expr> sigma(4, Expr::constant(0));
  const auto coeffs = CoefficientField::position_dependent(1, 1, gamma, sigma);
  EXPECT_EQ(error_kind_of([&] { posdep_certificate_search(coeffs, default_grid(1, false, 101)); }),
            ErrorKind::kSearchExhausted);
}

// -- potential growth ---------------------------------------------------------

namespace {

GrowthInput growth(int n, ScalarField v, VectorField grad, std::vector<double> d_grid) {
  GrowthInput in;
  in.n = n;
  in.v = std::move(v);
  in.grad_v = std::move(grad);
  in.radii = {1, 2, 4, 8, 16};
  in.d_grid = std::move(d_grid);
  return in;
}

}  // namespace

TEST(GrowthTest, QuadraticPotential) {
  for (int n : {1, 3}) {
    const auto in = growth(
        n, [](const VectorXd& q) { return 0.5 * q.squaredNorm(); },
        [](const VectorXd& q) { return q; }, {0.5, 1.0});
    const auto c = potential_growth_check(in);
    ASSERT_TRUE(c.satisfied);
    EXPECT_DOUBLE_EQ(c.constants.at("D"), 1.0);
    EXPECT_NEAR(c.constants.at("E"), 0.5, 1e-12);
    EXPECT_NEAR(c.constants.at("F"), 0.0, 1e-9);
  }
}

TEST(GrowthTest, ConstantPotentialUnsatisfied) {
  const auto c = potential_growth_check(growth(
      2, [](const VectorXd&) { return 1.0; }, [](const VectorXd& q) { return VectorXd::Zero(q.size()); },
      {0.5, 1.0, 2.0}));
  EXPECT_FALSE(c.satisfied);
  EXPECT_LE(c.margin, 0.0);
}

TEST(GrowthTest, QuarticIsRadiusLimited) {
  const auto c = potential_growth_check(growth(
      1, [](const VectorXd& q) { return std::pow(q(0), 4) / 4; },
      [](const VectorXd& q) { return VectorXd::Constant(1, std::pow(q(0), 3)); }, {4.0}));
  ASSERT_TRUE(c.satisfied);
  EXPECT_EQ(c.constants.at("D"), 4.0);
  EXPECT_EQ(c.constants.at("E"), 1.0);
  EXPECT_NEAR(c.constants.at("F"), -256.0, 1e-9);
  EXPECT_NE(c.notes.find("radius-limited"), std::string::npos);
}

TEST(GrowthTest, ReturnedConstantsSatisfySampledInequality) {
  // In one dimension the sampled directions are exactly +1 and -1.
  auto v = [](const VectorXd& q) { return 0.5 * q(0) * q(0) + std::cos(q(0)); };
  auto grad = [](const VectorXd& q) { return VectorXd::Constant(1, q(0) - std::sin(q(0))); };
  const auto c = potential_growth_check(growth(1, v, grad, {0.25, 0.5, 1.0}));
  ASSERT_TRUE(c.satisfied);
  const double d = c.constants.at("D"), e = c.constants.at("E"), f = c.constants.at("F");
  EXPECT_GT(e, 0.0);
  for (double r : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    for (double sgn : {1.0, -1.0}) {
      const VectorXd q = VectorXd::Constant(1, sgn * r);
      EXPECT_GE(q.dot(grad(q)), d * v(q) + e * r * r + f - 1e-12) << sgn * r;
    }
  }
}
