#include "qgle/ergodicity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "qgle/error.hpp"
#include "qgle/linalg.hpp"

namespace qgle {

std::string_view to_string(CertificateKind kind) {
  switch (kind) {
    case CertificateKind::kStability: return "stability";
    case CertificateKind::kFdt: return "fdt";
    case CertificateKind::kHormander: return "hormander";
    case CertificateKind::kLyapunovConst: return "lyapunov_const";
    case CertificateKind::kLyapunovUnbounded: return "lyapunov_unbounded";
    case CertificateKind::kLyapunovPosdep: return "lyapunov_posdep";
    case CertificateKind::kPotentialGrowth: return "potential_growth";
  }
  return "unknown";
}

namespace {

double min_eig(const MatrixXd& a) { return linalg::min_sym_eigenvalue(a); }

MatrixXd sym(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

// Radical inverse in base `base` (Halton component).
double radical_inverse(std::uint64_t i, int base) {
  double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % static_cast<std::uint64_t>(base));
    i /= static_cast<std::uint64_t>(base);
    f *= inv;
  }
  return r;
}

std::vector<int> first_primes(int count) {
  std::vector<int> primes;
  for (int k = 2; static_cast<int>(primes.size()) < count; ++k) {
    bool prime = true;
    for (int p : primes) {
      if (p * p > k) break;
      if (k % p == 0) {
        prime = false;
        break;
      }
    }
    if (prime) primes.push_back(k);
  }
  return primes;
}

// Points uniform in the unit ball of R^d from Halton coordinates:
// 2 per Gaussian pair for the direction plus one for the radius.
class HaltonBall {
 public:
  explicit HaltonBall(int dim, int extra) : dim_(dim), extra_(extra) {
    primes_ = first_primes(2 * ((dim + 1) / 2) + 1 + extra);
  }

  // Returns the ball point; `extra_out` receives `extra` uniform coordinates.
  VectorXd point(std::uint64_t index, VectorXd* extra_out) const {
    const std::uint64_t i = index + 1;  // skip the all-zero point
    VectorXd g(dim_);
    int used = 0;
    for (int k = 0; k < dim_; k += 2) {
      const double u1 = std::max(radical_inverse(i, primes_[static_cast<std::size_t>(used)]), 1e-12);
      const double u2 = radical_inverse(i, primes_[static_cast<std::size_t>(used + 1)]);
      used += 2;
      const double r = std::sqrt(-2.0 * std::log(u1));
      g(k) = r * std::cos(2 * std::numbers::pi * u2);
      if (k + 1 < dim_) g(k + 1) = r * std::sin(2 * std::numbers::pi * u2);
    }
    const double u = radical_inverse(i, primes_[static_cast<std::size_t>(used++)]);
    const double norm = g.norm();
    if (norm > 0) g /= norm;
    g *= std::pow(u, 1.0 / dim_);
    if (extra_out) {
      extra_out->resize(extra_);
      for (int k = 0; k < extra_; ++k)
        (*extra_out)(k) = radical_inverse(i, primes_[static_cast<std::size_t>(used++)]);
    }
    return g;
  }

 private:
  int dim_;
  int extra_;
  std::vector<int> primes_;
};

}  // namespace

Certificate stability_certificate(const CoefficientField& coeffs,
                                  const std::vector<VectorXd>& grid) {
  Certificate c;
  c.kind = CertificateKind::kStability;
  c.margin = stability_margin(coeffs, grid);
  c.satisfied = c.margin > 0.0;
  c.constants["grid_points"] = static_cast<double>(grid.size());
  c.notes = "min real part of spec(Gamma(q)) over the grid";
  return c;
}

Certificate fdt_certificate(const CoefficientField& coeffs, const std::vector<VectorXd>& grid,
                            double tol) {
  Certificate c;
  c.kind = CertificateKind::kFdt;
  try {
    if (!coeffs.is_constant())
      throw Error(ErrorKind::kPrecondition, "Q must be supplied for position-dependent fields");
    const FdtSolution sol = solve_fdt_Q(coeffs, tol);
    const double res = verify_fdt(coeffs, sol.Q, grid);
    c.matrices["Q"] = sol.Q;
    c.constants["residual"] = res;
    c.margin = tol - res;
    c.satisfied = c.margin > 0.0;
    c.notes = "Q solved from the auxiliary block";
  } catch (const Error& e) {
    c.margin = -1.0;
    c.satisfied = false;
    c.notes = std::string(to_string(e.kind())) + ": " + e.what();
  }
  return c;
}

SchurResult schur_psd(const MatrixXd& a11, const MatrixXd& a12, const MatrixXd& a22) {
  const Eigen::Index n = a11.rows();
  const Eigen::Index m = a22.rows();
  if (a11.cols() != n || a22.cols() != m || a12.rows() != n || a12.cols() != m)
    throw Error(ErrorKind::kDimensionMismatch, "schur_psd: block shapes");
  if (!linalg::is_symmetric(a11) || !linalg::is_symmetric(a22))
    throw Error(ErrorKind::kPrecondition, "schur_psd: diagonal blocks must be symmetric");
  MatrixXd full(n + m, n + m);
  full << a11, a12, a12.transpose(), a22;

  SchurResult r;
  r.margin = min_eig(full);
  const double scale = std::max(1.0, linalg::max_abs(full));
  const double tol = 1e-12 * scale;
  const double lam22 = min_eig(a22);
  if (lam22 > tol) {
    // A22 invertible: complement decides both PSD and PD
    const double s = min_eig(a11 - a12 * a22.ldlt().solve(a12.transpose()));
    r.pd = s > tol;
    r.psd = s >= -tol;
    return r;
  }
  // generalized inverse branch; PD is impossible with singular A22
  r.pd = false;
  if (lam22 < -tol) return r;
  const MatrixXd g = linalg::pinv(a22);
  const MatrixXd range_defect = (MatrixXd::Identity(m, m) - a22 * g) * a12.transpose();
  if (linalg::max_abs(range_defect) > 1e-9 * scale) return r;
  r.psd = min_eig(a11 - a12 * g * a12.transpose()) >= -tol;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

int span_rank(const std::vector<VectorXd>& vectors, Eigen::Index dim) {
  if (vectors.empty()) return 0;
  MatrixXd m(dim, static_cast<Eigen::Index>(vectors.size()));
  for (std::size_t i = 0; i < vectors.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = vectors[i];
  return linalg::rank(m);
}

MatrixXd lifted_drift(const MatrixXd& gamma, int n, const MatrixXd& h) {
  const Eigen::Index d = gamma.rows();
  MatrixXd s = MatrixXd::Zero(n + d, n + d);
  s.block(0, n, n, n) = MatrixXd::Identity(n, n);
  s.block(n, 0, n, n) = -h;
  s.block(n, n, d, d) = -gamma;
  return s;
}

}  // namespace

Certificate hormander_const_check(const MatrixXd& gamma, const MatrixXd& sigma, int n,
                                  HormanderMode mode, const MatrixXd* h) {
  const Eigen::Index d = gamma.rows();
  if (gamma.cols() != d || sigma.rows() != d || sigma.cols() != d || n < 1 || n >= d)
    throw Error(ErrorKind::kDimensionMismatch, "hormander_const_check: shapes");
  const int m = static_cast<int>(d) - n;
  Certificate c;
  c.kind = CertificateKind::kHormander;

  if (mode == HormanderMode::kIII) {
    const int r_sigma2 = linalg::rank(sigma.bottomRows(m));
    const int r_g12 = linalg::rank(gamma.topRightCorner(n, m));
    c.constants["rank_sigma2"] = r_sigma2;
    c.constants["rank_gamma12"] = r_g12;
    c.margin = std::min(r_sigma2 - m, r_g12 - n);
    c.satisfied = c.margin == 0.0;
    c.notes = "mode iii: rank(Sigma2) = m and rank(G12) = n";
    return c;
  }

  if (mode == HormanderMode::kI) {
    if (!h || h->rows() != n || h->cols() != n)
      throw Error(ErrorKind::kPrecondition, "mode i needs the n x n linear force part H");
    const MatrixXd s = lifted_drift(gamma, n, *h);
    std::vector<VectorXd> basis;
    for (Eigen::Index i = 0; i < d; ++i) {
      VectorXd v = VectorXd::Zero(n + d);
      v.tail(d) = sigma.col(i);
      basis.push_back(v);
    }
    // Krylov iteration until the span stops growing
    int rank = span_rank(basis, n + d);
    std::vector<VectorXd> frontier = basis;
    for (Eigen::Index it = 0; it < n + d; ++it) {
      for (VectorXd& v : frontier) v = s * v;
      std::vector<VectorXd> extended = basis;
      extended.insert(extended.end(), frontier.begin(), frontier.end());
      const int next = span_rank(extended, n + d);
      basis = std::move(extended);
      if (next == rank) break;
      rank = next;
    }
    c.constants["achieved_rank"] = rank;
    c.constants["required_rank"] = static_cast<double>(n + d);
    c.margin = rank - static_cast<double>(n + d);
    c.satisfied = c.margin == 0.0;
    c.notes = "mode i: Krylov span of (0, Sigma_i) under S";
    return c;
  }

  // mode ii
  const MatrixXd s0 = lifted_drift(gamma, n, MatrixXd::Zero(n, n));
  const double qtol = 1e-12 * std::max(1.0, linalg::max_abs(s0)) *
                      std::max(1.0, linalg::max_abs(sigma));
  std::vector<VectorXd> vectors;
  std::vector<int> k_index;
  const int cap = n + m - 1;
  for (Eigen::Index i = 0; i < d; ++i) {
    VectorXd v = VectorXd::Zero(n + d);
    v.tail(d) = sigma.col(i);
    int k = 0;
    while (k < cap) {
      v = s0 * v;
      if (v.head(n).cwiseAbs().maxCoeff() > qtol) break;
      ++k;
    }
    k_index.push_back(k);
    VectorXd g = sigma.col(i);
    for (int j = 0; j <= k; ++j) {
      vectors.push_back(g);
      g = gamma * g;
    }
  }
  const int rank = span_rank(vectors, d);
  c.constants["achieved_rank"] = rank;
  c.constants["required_rank"] = static_cast<double>(d);
  for (std::size_t i = 0; i < k_index.size(); ++i)
    c.constants["k_" + std::to_string(i + 1)] = k_index[i];
  c.margin = rank - static_cast<double>(d);
  c.satisfied = c.margin == 0.0;
  c.notes = "mode ii: span of Gamma^k Sigma_i for k <= k_i";
  return c;
}

// ---------------------------------------------------------------------------

LyapunovMatrix lyapunov_matrix_const(const MatrixXd& gamma, const MatrixXd& rhs_in) {
  if (gamma.rows() != gamma.cols())
    throw Error(ErrorKind::kDimensionMismatch, "Gamma must be square");
  const MatrixXd rhs =
      rhs_in.size() == 0 ? MatrixXd::Identity(gamma.rows(), gamma.cols()) : rhs_in;
  if (rhs.rows() != gamma.rows() || !linalg::is_spd(rhs))
    throw Error(ErrorKind::kValidation, "rhs must be SPD and match Gamma");
  if (linalg::min_real_eigenvalue(gamma) <= 0.0)
    throw Error(ErrorKind::kUnstable, "-Gamma is not stable");
  MatrixXd c;
  try {
    c = linalg::solve_sylvester(gamma.transpose(), gamma, rhs);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kNoSolution) throw Error(ErrorKind::kSolveFailure, e.what());
    throw;
  }
  c = sym(c);
  const double lo = min_eig(c);
  if (!(lo > 0.0)) throw Error(ErrorKind::kSolveFailure, "Lyapunov solution is not positive definite");
  LyapunovMatrix out;
  out.C = c / lo;
  out.lambda = 1.0 / lo;
  out.residual = linalg::max_abs(gamma.transpose() * out.C + out.C * gamma - out.lambda * rhs);
  return out;
}

// ---------------------------------------------------------------------------

LyapunovFunction LyapunovFunction::torus(const MatrixXd& c, int n, int l) {
  if (l < 1) throw Error(ErrorKind::kPrecondition, "l must be >= 1");
  const Eigen::Index d = c.rows();
  LyapunovFunction k;
  k.c_hat = MatrixXd::Zero(n + d, n + d);
  k.c_hat.bottomRightCorner(d, d) = sym(c);
  k.offset = 1.0;
  k.l = l;
  return k;
}

LyapunovFunction LyapunovFunction::euclidean(const MatrixXd& gamma21, const MatrixXd& q_inv,
                                             double a, double b, double d, double u_min, int l) {
  if (l < 1) throw Error(ErrorKind::kPrecondition, "l must be >= 1");
  const Eigen::Index m = gamma21.rows();
  const Eigen::Index n = gamma21.cols();
  MatrixXd c = MatrixXd::Zero(2 * n + m, 2 * n + m);
  c.block(0, 0, n, n) = MatrixXd::Identity(n, n);
  c.block(0, n, n, n) = MatrixXd::Identity(n, n);
  c.block(n, 0, n, n) = MatrixXd::Identity(n, n);
  c.block(n, n, n, n) = b * MatrixXd::Identity(n, n);
  c.block(n, 2 * n, n, m) = a * gamma21.transpose();
  c.block(2 * n, n, m, n) = a * gamma21;
  c.block(2 * n, 2 * n, m, m) = b * q_inv;
  LyapunovFunction k;
  k.c_hat = std::move(c);
  k.c_v = b * d;
  k.u_min = u_min;
  k.w0 = 1.0;
  k.offset = 0.0;
  k.l = l;
  return k;
}

namespace {

VectorXd stack(const ExtendedState& x) {
  VectorXd v(x.q.size() + x.p.size() + x.s.size());
  v << x.q, x.p, x.s;
  return v;
}

ExtendedState unstack(const VectorXd& v, Eigen::Index n, Eigen::Index m, double t) {
  return {v.head(n), v.segment(n, n), v.tail(m), t};
}

double lyap_w(const LyapunovFunction& k, const ModelSpec& model, const ExtendedState& x) {
  const VectorXd v = stack(x);
  double w = v.dot(k.c_hat * v) + k.w0;
  if (k.c_v != 0.0) w += k.c_v * (model.force.potential(x.q) - k.u_min);
  return w;
}

// Drift of (q, p, s) at x.
VectorXd drift(const ModelSpec& model, const ExtendedState& x) {
  const Eigen::Index n = x.q.size();
  const Eigen::Index m = x.s.size();
  const VectorXd v = model.mass.ldlt().solve(x.p);
  VectorXd z(n + m);
  z << v, x.s;
  VectorXd f = VectorXd::Zero(n + m);
  f.head(n) = model.force(x.q);
  VectorXd out(2 * n + m);
  out << v, f - model.coeffs.gamma(x.q) * z;
  return out;
}

}  // namespace

double LyapunovFunction::value(const ModelSpec& model, const ExtendedState& x) const {
  return std::pow(lyap_w(*this, model, x), l) + offset;
}

double LyapunovFunction::generator(const ModelSpec& model, const ExtendedState& x) const {
  const Eigen::Index n = x.q.size();
  const Eigen::Index m = x.s.size();
  const VectorXd v = stack(x);
  const MatrixXd cs = sym(c_hat);
  VectorXd grad = 2.0 * cs * v;
  if (c_v != 0.0) grad.head(n) += c_v * model.force.gradient(x.q);
  const MatrixXd sig = model.coeffs.sigma(x.q);
  const MatrixXd diff = sig * sig.transpose() / model.beta;
  const MatrixXd czz = cs.bottomRightCorner(n + m, n + m);
  const double lw = drift(model, x).dot(grad) + (diff.cwiseProduct(czz)).sum();
  const double w = lyap_w(*this, model, x);
  double out = l * std::pow(w, l - 1) * lw;
  if (l >= 2) {
    const VectorXd gz = grad.tail(n + m);
    out += 0.5 * l * (l - 1) * std::pow(w, l - 2) * gz.dot(diff * gz);
  }
  return out;
}

double LyapunovFunction::generator_fd(const ModelSpec& model, const ExtendedState& x,
                                      double h) const {
  const Eigen::Index n = x.q.size();
  const Eigen::Index m = x.s.size();
  const Eigen::Index d = 2 * n + m;
  const VectorXd v = stack(x);
  auto k_at = [&](const VectorXd& u) { return value(model, unstack(u, n, m, x.t)); };
  VectorXd grad(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    VectorXd up = v, dn = v;
    up(i) += h;
    dn(i) -= h;
    grad(i) = (k_at(up) - k_at(dn)) / (2 * h);
  }
  const Eigen::Index dz = n + m;
  MatrixXd hess(dz, dz);
  const double k0 = k_at(v);
  for (Eigen::Index i = 0; i < dz; ++i) {
    for (Eigen::Index j = i; j < dz; ++j) {
      const Eigen::Index a = n + i, b = n + j;
      if (i == j) {
        VectorXd up = v, dn = v;
        up(a) += h;
        dn(a) -= h;
        hess(i, i) = (k_at(up) - 2 * k0 + k_at(dn)) / (h * h);
      } else {
        VectorXd pp = v, pm = v, mp = v, mm = v;
        pp(a) += h; pp(b) += h;
        pm(a) += h; pm(b) -= h;
        mp(a) -= h; mp(b) += h;
        mm(a) -= h; mm(b) -= h;
        hess(i, j) = hess(j, i) = (k_at(pp) - k_at(pm) - k_at(mp) + k_at(mm)) / (4 * h * h);
      }
    }
  }
  const MatrixXd sig = model.coeffs.sigma(x.q);
  const MatrixXd diff = sig * sig.transpose() / model.beta;
  return drift(model, x).dot(grad) + 0.5 * (diff.cwiseProduct(hess)).sum();
}

std::vector<ExtendedState> drift_samples(const ModelSpec& model, int count, double radius) {
  const int n = model.n();
  const int m = model.m();
  const bool torus = model.domain.is_torus();
  const int ball_dim = torus ? n + m : 2 * n + m;
  HaltonBall ball(ball_dim, torus ? n : 0);
  std::vector<ExtendedState> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    VectorXd extra;
    const VectorXd x = radius * ball.point(static_cast<std::uint64_t>(i), &extra);
    ExtendedState st;
    if (torus) {
      st.q = extra;
      st.p = x.head(n);
      st.s = x.tail(m);
    } else {
      st.q = x.head(n);
      st.p = x.segment(n, n);
      st.s = x.tail(m);
    }
    out.push_back(std::move(st));
  }
  return out;
}

DriftConstants lyapunov_drift_constants(const ModelSpec& model, const LyapunovFunction& k,
                                        const std::vector<ExtendedState>& samples,
                                        double k_quantile) {
  if (model.n() < 1 || k.c_hat.rows() != 2 * model.n() + model.m())
    throw Error(ErrorKind::kPrecondition, "Lyapunov function does not match the model shape");
  if (samples.empty()) throw Error(ErrorKind::kPrecondition, "no drift samples");
  DriftConstants out;
  out.n_samples = samples.size();

  // finite-difference cross-check at three spread-out moderate states
  for (int j = 0; j < 3; ++j) {
    ExtendedState x = samples[(samples.size() * static_cast<std::size_t>(j + 1)) / 4];
    const double scale = std::max(1.0, std::sqrt(x.p.squaredNorm() + x.s.squaredNorm()));
    x.p /= scale;
    x.s /= scale;
    if (!model.domain.is_torus()) x.q /= scale;
    const double exact = k.generator(model, x);
    const double fd = k.generator_fd(model, x);
    const double denom = std::max({1.0, std::abs(exact), k.value(model, x)});
    out.fd_max_rel_error = std::max(out.fd_max_rel_error, std::abs(exact - fd) / denom);
  }

  std::vector<double> kv(samples.size()), lk(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    kv[i] = k.value(model, samples[i]);
    lk[i] = k.generator(model, samples[i]);
  }
  std::vector<double> sorted = kv;
  const auto qi = static_cast<std::size_t>(
      std::clamp(k_quantile, 0.0, 1.0) * static_cast<double>(sorted.size() - 1));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(qi), sorted.end());
  const double threshold = sorted[qi];

  double b0 = 0.0;
  for (std::size_t i = 0; i < kv.size(); ++i)
    if (kv[i] < threshold) b0 = std::max(b0, lk[i]);
  double a = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kv.size(); ++i)
    if (kv[i] >= threshold) a = std::min(a, (b0 - lk[i]) / kv[i]);
  if (!(a > 0.0) || !std::isfinite(a))
    throw Error(ErrorKind::kInfeasible,
                "no positive drift rate on the sample set (a = " + std::to_string(a) + ")");
  double b = b0 + a;
  for (std::size_t i = 0; i < kv.size(); ++i) b = std::max(b, lk[i] + a * kv[i]);
  out.a = a;
  out.b = b;
  return out;
}

DriftConstants lyapunov_drift_constants(const ModelSpec& model, const MatrixXd& c, int l,
                                        const std::vector<ExtendedState>& samples) {
  if (!model.domain.is_torus())
    throw Error(ErrorKind::kPrecondition,
                "the (z^T C z)^l + 1 family is for torus domains; use LyapunovFunction::euclidean");
  return lyapunov_drift_constants(model, LyapunovFunction::torus(c, model.n(), l), samples);
}

Certificate lyapunov_const_certificate(const ModelSpec& model, int l, int n_samples,
                                       double radius) {
  Certificate cert;
  cert.kind = CertificateKind::kLyapunovConst;
  cert.notes = "sampled drift inequality";
  try {
    const LyapunovMatrix lm = lyapunov_matrix_const(model.coeffs.gamma());
    cert.matrices["C"] = lm.C;
    cert.constants["lambda"] = lm.lambda;
    cert.constants["residual"] = lm.residual;
    if (model.domain.is_torus()) {
      const DriftConstants dc = lyapunov_drift_constants(model, lm.C, l,
                                                         drift_samples(model, n_samples, radius));
      cert.constants["a"] = dc.a;
      cert.constants["b"] = dc.b;
      cert.constants["fd_rel_error"] = dc.fd_max_rel_error;
      cert.margin = dc.a;
    } else {
      cert.margin = 1.0 / lm.lambda;
      cert.notes = "Lyapunov matrix only; drift needs the unbounded-domain family";
    }
    cert.satisfied = cert.margin > 0.0;
  } catch (const Error& e) {
    cert.satisfied = false;
    cert.margin = -1.0;
    cert.notes = std::string(to_string(e.kind())) + ": " + e.what();
  }
  return cert;
}

// ---------------------------------------------------------------------------

MatrixXd unbounded_c_hat(const MatrixXd& gamma, const MatrixXd& Q, int n, double a, double b) {
  const Eigen::Index m = gamma.rows() - n;
  MatrixXd c = MatrixXd::Zero(2 * n + m, 2 * n + m);
  const MatrixXd i_n = MatrixXd::Identity(n, n);
  const MatrixXd g21 = gamma.bottomLeftCorner(m, n);
  c.block(0, 0, n, n) = i_n;
  c.block(0, n, n, n) = i_n;
  c.block(n, 0, n, n) = i_n;
  c.block(n, n, n, n) = b * i_n;
  c.block(n, 2 * n, n, m) = a * g21.transpose();
  c.block(2 * n, n, m, n) = a * g21;
  c.block(2 * n, 2 * n, m, m) = b * Q.inverse();
  return c;
}

MatrixXd unbounded_r_hat(const MatrixXd& gamma, const MatrixXd& Q, int n, double a, double b,
                         double e) {
  const Eigen::Index m = gamma.rows() - n;
  const MatrixXd i_n = MatrixXd::Identity(n, n);
  const MatrixXd g11 = gamma.topLeftCorner(n, n);
  const MatrixXd g12 = gamma.topRightCorner(n, m);
  const MatrixXd g21 = gamma.bottomLeftCorner(m, n);
  const MatrixXd g22 = gamma.bottomRightCorner(m, m);
  const MatrixXd qi = Q.inverse();
  MatrixXd r = MatrixXd::Zero(2 * n + m, 2 * n + m);
  r.block(0, 0, n, n) = e * i_n;
  r.block(n, 0, n, n) = -i_n + g11.transpose();
  r.block(n, n, n, n) = -i_n + b * g11 + a * g21.transpose() * g21;
  r.block(n, 2 * n, n, m) = b * g21.transpose() * qi;
  r.block(2 * n, 0, m, n) = g12.transpose();
  r.block(2 * n, n, m, n) = a * g22.transpose() * g21 + b * g12.transpose() + a * g21 * g11;
  r.block(2 * n, 2 * n, m, m) = a * g21 * g12 + b * qi * g22;
  return r;
}

Certificate unbounded_certificate(const MatrixXd& gamma, const MatrixXd& Q, int n,
                                  const UnboundedParams& params) {
  const Eigen::Index d = gamma.rows();
  if (gamma.cols() != d || n < 1 || n >= d)
    throw Error(ErrorKind::kDimensionMismatch, "unbounded_certificate: Gamma shape");
  const Eigen::Index m = d - n;
  if (Q.rows() != m || Q.cols() != m || !linalg::is_spd(Q))
    throw Error(ErrorKind::kValidation, "Q must be SPD m x m");
  if (!(params.e > 0.0)) throw Error(ErrorKind::kPrecondition, "growth constant E must be > 0");

  Certificate cert;
  cert.kind = CertificateKind::kLyapunovUnbounded;
  const MatrixXd g11 = gamma.topLeftCorner(n, n);
  const MatrixXd g21 = gamma.bottomLeftCorner(m, n);
  const int rank11 = linalg::rank(g11);
  cert.constants["rank_gamma11"] = rank11;
  const int cap = params.max_doublings;

  auto record = [&](double a, double b, double margin, const std::vector<MatrixXd>& rs) {
    cert.constants["A"] = a;
    cert.constants["B"] = b;
    cert.constants["E"] = params.e;
    cert.matrices["C_hat"] = unbounded_c_hat(gamma, Q, n, a, b);
    cert.matrices["R_sym"] = rs.front();
    cert.margin = margin;
    cert.satisfied = margin > 0.0;
  };

  if (rank11 == n) {
    for (int ib = 0; ib <= cap; ++ib) {
      const double b = std::ldexp(1.0, ib);
      const double mc = min_eig(unbounded_c_hat(gamma, Q, n, 0.0, b));
      const MatrixXd rs = sym(unbounded_r_hat(gamma, Q, n, 0.0, b, params.e));
      const double mr = min_eig(rs);
      if (mc > 0.0 && mr > 0.0) {
        record(0.0, b, std::min(mc, mr), {rs});
        cert.constants["margin_C"] = mc;
        cert.constants["margin_R"] = mr;
        cert.notes = "rank(G11) = n branch, A = 0";
        return cert;
      }
    }
    throw Error(ErrorKind::kSearchExhausted, "no B found within the doubling cap");
  }

  if (linalg::max_abs(g11) > 1e-12)
    throw Error(ErrorKind::kPrecondition,
                "G11 must have full rank or vanish for the unbounded construction");
  const MatrixXd g21tg21 = g21.transpose() * g21;
  double a = 1.0;
  int ia = 0;
  while (min_eig(-MatrixXd::Identity(n, n) + a * g21tg21) <= 0.0) {
    if (++ia > cap)
      throw Error(ErrorKind::kSearchExhausted, "-I + A G21^T G21 never becomes positive definite");
    a *= 2.0;
  }
  for (; ia <= cap; ++ia, a *= 2.0) {
    for (int ib = 0; ib <= cap; ++ib) {
      const double b = std::ldexp(1.0, ib);
      const double mc = min_eig(unbounded_c_hat(gamma, Q, n, a, b));
      if (mc <= 0.0) continue;
      const MatrixXd base = unbounded_r_hat(gamma, Q, n, a, b, params.e);
      MatrixXd r0 = base, r1 = base;
      r0.block(0, 2 * n, n, m) += a * params.h_bar * g21.transpose();
      r1.block(0, 2 * n, n, m) -= a * params.h_bar * g21.transpose();
      const MatrixXd s0 = sym(r0), s1 = sym(r1);
      const double m0 = min_eig(s0), m1 = min_eig(s1);
      if (m0 > 0.0 && m1 > 0.0) {
        record(a, b, std::min({mc, m0, m1}), {s0, s1});
        cert.matrices["R_sym_1"] = s1;
        cert.constants["margin_C"] = mc;
        cert.constants["margin_R0"] = m0;
        cert.constants["margin_R1"] = m1;
        cert.notes = "G11 = 0 branch with perturbed quadratic force";
        return cert;
      }
    }
  }
  throw Error(ErrorKind::kSearchExhausted, "no (A, B) found within the doubling caps");
}

// ---------------------------------------------------------------------------

PosdepVerification posdep_certificate_verify(const CoefficientField& coeffs, const MatrixXd& c,
                                             const std::vector<VectorXd>& grid) {
  if (grid.empty()) throw Error(ErrorKind::kPrecondition, "grid must be nonempty");
  if (c.rows() != coeffs.size() || c.cols() != coeffs.size())
    throw Error(ErrorKind::kDimensionMismatch, "C must be (n+m) x (n+m)");
  PosdepVerification out;
  out.margin = std::numeric_limits<double>::infinity();
  out.table.reserve(grid.size());
  for (const VectorXd& q : grid) {
    const MatrixXd g = coeffs.gamma(q);
    const MatrixXd r = sym(g * c + c * g.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(r, Eigen::EigenvaluesOnly);
    out.table.push_back({q, es.eigenvalues()});
    out.margin = std::min(out.margin, es.eigenvalues()(0));
  }
  return out;
}

namespace {

// Rows of the vectorised map C -> G C + C G^T.
MatrixXd lyap_operator(const MatrixXd& g) {
  const Eigen::Index d = g.rows();
  const MatrixXd id = MatrixXd::Identity(d, d);
  MatrixXd op = MatrixXd::Zero(d * d, d * d);
  for (Eigen::Index j = 0; j < d; ++j) {
    op.block(j * d, j * d, d, d) += g;
    for (Eigen::Index l = 0; l < d; ++l) op.block(j * d, l * d, d, d) += g(j, l) * id;
  }
  return op;
}

}  // namespace

MatrixXd posdep_certificate_search(const CoefficientField& coeffs,
                                   const std::vector<VectorXd>& grid, int max_iter) {
  if (grid.empty()) throw Error(ErrorKind::kPrecondition, "grid must be nonempty");
  const Eigen::Index d = coeffs.size();
  MatrixXd mean = MatrixXd::Zero(d, d);
  for (const VectorXd& q : grid) mean += coeffs.gamma(q);
  mean /= static_cast<double>(grid.size());

  const MatrixXd id = MatrixXd::Identity(d, d);
  const VectorXd vec_id = Eigen::Map<const VectorXd>(id.data(), d * d);
  MatrixXd c;
  try {
    c = sym(linalg::solve_sylvester(mean, mean.transpose(), id));
  } catch (const Error&) {
    c = id;
  }
  std::vector<MatrixXd> blocks = {lyap_operator(mean)};
  for (int it = 0; it < max_iter; ++it) {
    if (linalg::is_spd(c)) {
      const PosdepVerification v = posdep_certificate_verify(coeffs, c, grid);
      if (v.margin > 0.0) return c;
      // add the worst grid point with a weight that grows with the iteration
      std::size_t worst = 0;
      for (std::size_t i = 1; i < v.table.size(); ++i)
        if (v.table[i].eigenvalues(0) < v.table[worst].eigenvalues(0)) worst = i;
      blocks.push_back((1.0 + it) * lyap_operator(coeffs.gamma(grid[worst])));
    } else {
      blocks.push_back(static_cast<double>(blocks.size()) * lyap_operator(mean));
    }
    const Eigen::Index rows = static_cast<Eigen::Index>(blocks.size()) * d * d;
    MatrixXd a(rows, d * d);
    VectorXd rhs(rows);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      a.middleRows(static_cast<Eigen::Index>(k) * d * d, d * d) = blocks[k];
      const double w = k == 0 ? 1.0 : blocks[k].cwiseAbs().maxCoeff() /
                                          std::max(1e-300, blocks[0].cwiseAbs().maxCoeff());
      rhs.segment(static_cast<Eigen::Index>(k) * d * d, d * d) = w * vec_id;
    }
    const VectorXd x = a.colPivHouseholderQr().solve(rhs);
    c = sym(Eigen::Map<const MatrixXd>(x.data(), d, d));
  }
  if (linalg::is_spd(c) && posdep_certificate_verify(coeffs, c, grid).margin > 0.0) return c;
  throw Error(ErrorKind::kSearchExhausted, "no positive definite certificate found on the grid");
}

// ---------------------------------------------------------------------------

Certificate potential_growth_check(const GrowthInput& in) {
  if (in.n < 1 || in.radii.size() < 2 || in.d_grid.empty())
    throw Error(ErrorKind::kPrecondition, "growth check needs n >= 1, two radii and a D grid");
  std::vector<double> radii = in.radii;
  std::sort(radii.begin(), radii.end());

  // deterministic directions on the sphere
  std::vector<VectorXd> dirs;
  if (in.n == 1) {
    dirs = {VectorXd::Constant(1, 1.0), VectorXd::Constant(1, -1.0)};
  } else {
    HaltonBall ball(in.n, 0);
    for (int i = 0; i < in.directions; ++i) {
      VectorXd v = ball.point(static_cast<std::uint64_t>(i), nullptr);
      if (v.norm() > 1e-12) dirs.push_back(v.normalized());
    }
  }

  struct Sample {
    double r;
    std::size_t dir;
    double qgrad;
    double v;
  };
  std::vector<Sample> samples;
  double u_min = in.v(VectorXd::Zero(in.n));
  double g_const = -std::numeric_limits<double>::infinity();
  for (double r : radii) {
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      const VectorXd q = r * dirs[k];
      const double v = in.v(q);
      samples.push_back({r, k, q.dot(in.grad_v(q)), v});
      u_min = std::min(u_min, v);
      if (in.force) g_const = std::max(g_const, q.dot(in.force(q)) + q.dot(in.grad_v(q)));
    }
  }

  struct Candidate {
    bool ok = false;
    bool limited = false;
    double d = 0, e = 0, f = 0, margin = -std::numeric_limits<double>::infinity();
  };
  Candidate best;
  const double r_out = radii.back();
  const double r_prev = radii[radii.size() - 2];
  for (double d : in.d_grid) {
    Candidate c;
    c.d = d;
    // growth slope between the two outermost spheres, worst direction
    double slope = std::numeric_limits<double>::infinity();
    double outer_min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      double g_out = 0, g_prev = 0;
      for (const Sample& s : samples) {
        if (s.dir != k) continue;
        if (s.r == r_out) g_out = s.qgrad - d * s.v;
        if (s.r == r_prev) g_prev = s.qgrad - d * s.v;
      }
      slope = std::min(slope, (g_out - g_prev) / (r_out * r_out - r_prev * r_prev));
      outer_min = std::min(outer_min, g_out);
    }
    auto min_f = [&](double e) {
      double f = std::numeric_limits<double>::infinity();
      for (const Sample& s : samples) f = std::min(f, s.qgrad - d * s.v - e * s.r * s.r);
      return f;
    };
    if (slope > 0.0) {
      c.ok = true;
      c.e = slope;
      c.f = min_f(slope);
      c.margin = slope;
    } else if (outer_min >= 0.0) {
      c.ok = true;
      c.limited = true;
      c.e = 1.0;
      c.f = min_f(1.0);
      c.margin = 1.0;
    } else {
      c.margin = outer_min;
    }
    auto better = [](const Candidate& x, const Candidate& y) {
      if (x.ok != y.ok) return x.ok;
      if (!x.ok) return x.margin > y.margin;
      if (x.limited != y.limited) return !x.limited;
      return x.d > y.d;
    };
    if (better(c, best) || (!best.ok && best.margin == -std::numeric_limits<double>::infinity()))
      best = c;
  }

  Certificate cert;
  cert.kind = CertificateKind::kPotentialGrowth;
  cert.satisfied = best.ok;
  cert.margin = best.ok ? best.e : std::min(best.margin, -1e-300);
  cert.constants["D"] = best.d;
  cert.constants["E"] = best.e;
  cert.constants["F"] = best.f;
  cert.constants["u_min"] = u_min;
  if (in.force) cert.constants["G"] = std::max(0.0, g_const);
  cert.notes = "sampled on " + std::to_string(radii.size()) + " spheres, not a proof";
  if (best.ok && best.limited) cert.notes += "; radius-limited (E > 0 only on the sampled range)";
  return cert;
}

}  // namespace qgle
