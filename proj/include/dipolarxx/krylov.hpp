// Copyright 2026 The dipolarxx Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dipolarxx/util.hpp"

namespace dipolarxx {

using MatVec = std::function<void(const Eigen::VectorXcd&, Eigen::VectorXcd&)>;

namespace detail {

// exp(-i dt T) e1 for a real symmetric tridiagonal T given by diagonal
// alpha and off-diagonal beta.
inline Eigen::VectorXcd tridiag_expm_e1(const std::vector<double>& alpha,
                                        const std::vector<double>& beta,
                                        double dt) {
  const int m = static_cast<int>(alpha.size());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    t(i, i) = alpha[i];
    if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
  const Eigen::VectorXd& lam = es.eigenvalues();
  const Eigen::MatrixXd& q = es.eigenvectors();
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(m);
  for (int i = 0; i < m; ++i) {
    const cplx phase = std::exp(cplx(0.0, -dt * lam(i)));
    y += phase * q(0, i) * q.col(i).cast<cplx>();
  }
  return y;
}

}  // namespace detail

// One step of e^{-i H dt} v by Lanczos subspace exponentiation with the
// standard a-posteriori error estimate; the subspace grows until the
// estimate drops below tol * ||v||. If m_max is reached first the step is
// split in half recursively.
inline Eigen::VectorXcd krylov_expm(const MatVec& apply,
                                    const Eigen::VectorXcd& v, double dt,
                                    double tol = 1e-8, int m_max = 48,
                                    int depth = 0) {
  const double vnorm = v.norm();
  if (vnorm == 0.0 || dt == 0.0) return v;
  if (depth > 20) throw std::runtime_error("Krylov step split did not converge");
  const auto dim = v.size();
  const int cap = static_cast<int>(std::min<std::ptrdiff_t>(m_max, dim));

  Eigen::MatrixXcd basis(dim, cap + 1);
  basis.col(0) = v / vnorm;
  std::vector<double> alpha, beta;
  Eigen::VectorXcd w(dim), y;
  double scale = 0.0;

  for (int j = 0; j < cap; ++j) {
    apply(basis.col(j), w);
    alpha.push_back(basis.col(j).dot(w).real());
    w -= alpha[j] * basis.col(j);
    if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
    // Full reorthogonalization keeps the basis clean at negligible cost
    // relative to the sparse matvec.
    for (int i = 0; i <= j; ++i) w -= basis.col(i).dot(w) * basis.col(i);
    const double b = w.norm();
    scale = std::max({scale, std::abs(alpha[j]), b});
    y = detail::tridiag_expm_e1(alpha, beta, dt);
    if (b < 1e-13 * std::max(scale, 1e-30)) {
      // Invariant subspace: the small exponential is exact.
      break;
    }
    const double err = b * std::abs(y(j));
    if (err < tol) break;
    if (j + 1 == cap) {
      const Eigen::VectorXcd half =
          krylov_expm(apply, v, 0.5 * dt, tol, m_max, depth + 1);
      return krylov_expm(apply, half, 0.5 * dt, tol, m_max, depth + 1);
    }
    beta.push_back(b);
    basis.col(j + 1) = w / b;
  }
  const int m = static_cast<int>(alpha.size());
  return vnorm * (basis.leftCols(m) * y);
}

struct EigenPairs {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXcd vectors; // columns
  std::vector<double> residuals;
  bool converged = true;
};

// Lowest k eigenpairs of a Hermitian operator by Lanczos with full
// reorthogonalization; deterministic start vector from the seed. Restarts
// with a fresh deflated vector on early breakdown.
inline EigenPairs lanczos_lowest(const MatVec& apply, std::ptrdiff_t dim,
                                 int k, std::uint64_t seed = 7,
                                 int m_max = 350, double tol = 1e-10) {
  k = static_cast<int>(std::min<std::ptrdiff_t>(k, dim));
  const int cap = static_cast<int>(std::min<std::ptrdiff_t>(m_max, dim));
  Xoshiro256 rng(seed);
  Eigen::MatrixXcd basis(dim, cap);
  Eigen::VectorXcd start(dim);
  for (std::ptrdiff_t i = 0; i < dim; ++i)
    start(i) = cplx(rng.uniform() - 0.5, rng.uniform() - 0.5);
  start.normalize();
  basis.col(0) = start;

  std::vector<double> alpha, beta;
  Eigen::VectorXcd w(dim);
  int m = 0;
  for (int j = 0; j < cap; ++j) {
    apply(basis.col(j), w);
    alpha.push_back(basis.col(j).dot(w).real());
    w -= alpha[j] * basis.col(j);
    if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
    for (int i = 0; i <= j; ++i) w -= basis.col(i).dot(w) * basis.col(i);
    for (int i = 0; i <= j; ++i) w -= basis.col(i).dot(w) * basis.col(i);
    m = j + 1;
    double b = w.norm();
    if (j + 1 == cap) break;
    if (b < 1e-12) {
      // Exhausted an invariant subspace; deflate with a fresh vector.
      if (m >= dim) break;
      for (std::ptrdiff_t i = 0; i < dim; ++i)
        w(i) = cplx(rng.uniform() - 0.5, rng.uniform() - 0.5);
      for (int i = 0; i <= j; ++i) w -= basis.col(i).dot(w) * basis.col(i);
      for (int i = 0; i <= j; ++i) w -= basis.col(i).dot(w) * basis.col(i);
      b = w.norm();
      if (b < 1e-12) break;
      beta.push_back(0.0);
    } else {
      beta.push_back(b);
    }
    basis.col(j + 1) = w / b;

    // Convergence test on the k lowest Ritz pairs every few iterations;
    // skipped right after a deflation restart where beta is zero.
    if (m >= std::max(2 * k, 8) && j % 4 == 3 && beta[m - 1] != 0.0) {
      Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
      for (int i = 0; i < m; ++i) {
        t(i, i) = alpha[i];
        if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[i];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
      bool ok = true;
      const double scale = std::max(1.0, std::abs(es.eigenvalues()(0)));
      for (int i = 0; i < k; ++i)
        if (beta[m - 1] * std::abs(es.eigenvectors()(m - 1, i)) >
            tol * scale) {
          ok = false;
          break;
        }
      if (ok) break;
    }
  }

  m = static_cast<int>(alpha.size());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    t(i, i) = alpha[i];
    if (i + 1 < m && i < static_cast<int>(beta.size()))
      t(i, i + 1) = t(i + 1, i) = beta[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
  EigenPairs out;
  out.values.resize(k);
  out.vectors.resize(dim, k);
  for (int i = 0; i < k; ++i) {
    out.values(i) = es.eigenvalues()(i);
    out.vectors.col(i) =
        basis.leftCols(m) * es.eigenvectors().col(i).cast<cplx>();
    out.vectors.col(i).normalize();
    apply(out.vectors.col(i), w);
    const double res = (w - out.values(i) * out.vectors.col(i)).norm();
    out.residuals.push_back(res);
    if (res > 1e-6 * std::max(1.0, std::abs(out.values(i))))
      out.converged = false;
  }
  return out;
}

}  // namespace dipolarxx
