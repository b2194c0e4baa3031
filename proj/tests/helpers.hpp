#pragma once

#include <string>
#include <vector>

#include "qgle/kernels.hpp"
#include "qgle/model.hpp"

namespace qgle::testing {

inline ModelSpec prony_model(const std::vector<PronyMode>& modes, bool torus,
                             const std::string& potential, double beta = 1.0) {
  const MarkovianSystem sys = coeffs_from_prony(modes, 1);
  const Domain domain = torus ? Domain::torus(1) : Domain::euclidean(1);
  return ModelSpec{domain, MatrixXd::Identity(1, 1), beta,
                   ForceField::from_potential(Expr::parse(potential, 1), 1), sys.coeffs, sys.Q};
}

inline ModelSpec constant_model(bool torus, const MatrixXd& gamma, const MatrixXd& sigma, int n,
                                const std::string& potential, double beta = 1.0) {
  const int m = static_cast<int>(gamma.rows()) - n;
  const Domain domain = torus ? Domain::torus(n) : Domain::euclidean(n);
  return ModelSpec{domain,
                   MatrixXd::Identity(n, n),
                   beta,
                   ForceField::from_potential(Expr::parse(potential, n), n),
                   CoefficientField::constant(n, m, gamma, sigma),
                   std::nullopt};
}

inline MatrixXd mat(std::initializer_list<std::initializer_list<double>> rows) {
  MatrixXd a(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) a(i, j++) = v;
    ++i;
  }
  return a;
}

}  // namespace qgle::testing
