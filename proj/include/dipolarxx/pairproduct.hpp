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
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dipolarxx/lattice.hpp"
#include "dipolarxx/util.hpp"

namespace dipolarxx {

// Variational amplitude over Ising configurations sigma in {-1,+1}^N,
//
//   log Psi(sigma) = sum_{j<k} [ f_{c(j,k)} sigma_j sigma_k
//                              + g_{c(j,k)} (sigma_j + sigma_k) ]
//                  + h sum_j sigma_j,
//
// with one complex pair weight f and one complex pair field g per
// translation class c of the coupling table, plus a uniform field h.
// sigma_j = +1 means site j points up along z.
struct PairProductParams {
  int n = 0;
  std::vector<cplx> f;
  std::vector<cplx> g;
  cplx h = 0.0;

  int n_params() const { return static_cast<int>(f.size() + g.size()) + 1; }

  // Flat layout [f_0..f_{C-1}, g_0..g_{C-1}, h].
  Eigen::VectorXcd pack() const {
    const int c = static_cast<int>(f.size());
    Eigen::VectorXcd v(n_params());
    for (int d = 0; d < c; ++d) v(d) = f[d];
    for (int d = 0; d < c; ++d) v(c + d) = g[d];
    v(2 * c) = h;
    return v;
  }

  static PairProductParams unpack(int n, int n_classes,
                                  const Eigen::VectorXcd& v) {
    if (v.size() != 2 * n_classes + 1)
      throw std::invalid_argument("parameter vector has the wrong length");
    PairProductParams p;
    p.n = n;
    p.f.resize(n_classes);
    p.g.resize(n_classes);
    for (int d = 0; d < n_classes; ++d) p.f[d] = v(d);
    for (int d = 0; d < n_classes; ++d) p.g[d] = v(n_classes + d);
    p.h = v(2 * n_classes);
    return p;
  }
};

// All parameters zero: the product state of spins along +x (amplitudes are
// configuration independent).
inline PairProductParams css_x_params(const CouplingTable& table) {
  PairProductParams p;
  p.n = table.n();
  p.f.assign(table.n_classes, cplx(0.0, 0.0));
  p.g.assign(table.n_classes, cplx(0.0, 0.0));
  return p;
}

// Spins along (cos theta, sin theta, 0). The rotation about z multiplies a
// configuration with total magnetization M = sum sigma / 2 by e^{-i theta M};
// spreading the exponent over the pair fields gives g = -i theta / (2(N-1))
// uniformly, since every site belongs to N-1 pairs.
inline PairProductParams css_azimuthal_params(const CouplingTable& table,
                                              double theta) {
  PairProductParams p = css_x_params(table);
  const cplx g(0.0, -theta / (2.0 * (table.n() - 1)));
  for (auto& v : p.g) v = g;
  return p;
}

// Exact snapshot of one-axis-twisting evolution from the +x product state:
// e^{-i t Jz^2 / (2 I)} contributes e^{-i t sigma_j sigma_k / (4 I)} per pair
// plus a configuration-independent phase, so f = -i t / (4 I) on every class.
inline PairProductParams oat_snapshot_params(const CouplingTable& table,
                                             double inertia, double t) {
  if (inertia <= 0.0) throw std::invalid_argument("inertia must be positive");
  PairProductParams p = css_x_params(table);
  const cplx f(0.0, -t / (4.0 * inertia));
  for (auto& v : p.f) v = f;
  return p;
}

// The twisting snapshot at t = pi I, independent of I: an equal-weight
// superposition of the +x and -x product states.
inline PairProductParams ghz_params(const CouplingTable& table) {
  PairProductParams p = css_x_params(table);
  const cplx f(0.0, -std::numbers::pi / 4.0);
  for (auto& v : p.f) v = f;
  return p;
}

// Evaluation and incremental-update machinery for the pair-product
// amplitude on a fixed coupling table. The only mutable walker state is a
// set of integer configuration sums, updated exactly by single-spin flips
// in O(N); every complex quantity is derived from those integers and the
// current parameters on demand. Restoring a walker from its configuration
// therefore reproduces the original run bit for bit.
class PairProductModel {
 public:
  explicit PairProductModel(const CouplingTable& table) : table_(table) {}

  int n() const { return table_.n(); }
  int n_classes() const { return table_.n_classes; }
  const CouplingTable& couplings() const { return table_; }

  struct Cache {
    std::vector<std::int8_t> sigma;
    Eigen::MatrixXi psi;        // psi(i, d) = sum of sigma_k, k != i in class d
    Eigen::VectorXi pair_corr;  // per class: sum over pairs of sigma_j sigma_k
    int m_tot = 0;              // sum of sigma
    std::vector<cplx> f;        // parameter snapshot for ratio evaluation
    cplx field = 0.0;           // sum_d g_d * pairs_per_site(d) + h
  };

  void check_params(const PairProductParams& p) const {
    if (p.n != n() || static_cast<int>(p.f.size()) != n_classes() ||
        static_cast<int>(p.g.size()) != n_classes())
      throw std::invalid_argument("parameters do not match the lattice");
  }

  // Direct O(N^2) evaluation from scratch. Also the reference the cached
  // ratio path is tested against.
  cplx log_amplitude(const PairProductParams& p,
                     const std::vector<std::int8_t>& sigma) const {
    check_params(p);
    const int nn = n();
    cplx acc(0.0, 0.0);
    int m = 0;
    for (int i = 0; i < nn; ++i) m += sigma[i];
    for (int i = 0; i < nn; ++i)
      for (int k = i + 1; k < nn; ++k) {
        const int cid = table_.class_of(i, k);
        const double ss = sigma[i] * sigma[k];
        const double sp = sigma[i] + sigma[k];
        acc += p.f[cid] * ss + p.g[cid] * sp;
      }
    acc += p.h * static_cast<double>(m);
    return acc;
  }

  Cache make_cache(const PairProductParams& p,
                   std::vector<std::int8_t> sigma) const {
    check_params(p);
    const int nn = n();
    if (static_cast<int>(sigma.size()) != nn)
      throw std::invalid_argument("configuration has the wrong length");
    Cache c;
    c.sigma = std::move(sigma);
    c.psi = Eigen::MatrixXi::Zero(nn, n_classes());
    c.pair_corr = Eigen::VectorXi::Zero(n_classes());
    c.m_tot = 0;
    for (int i = 0; i < nn; ++i) c.m_tot += c.sigma[i];
    for (int i = 0; i < nn; ++i)
      for (int k = i + 1; k < nn; ++k) {
        const int cid = table_.class_of(i, k);
        c.psi(i, cid) += c.sigma[k];
        c.psi(k, cid) += c.sigma[i];
        c.pair_corr(cid) += c.sigma[i] * c.sigma[k];
      }
    refresh_fields(c, p);
    return c;
  }

  // Update the parameter snapshot after a parameter change; the integer
  // sums are untouched.
  void refresh_fields(Cache& c, const PairProductParams& p) const {
    check_params(p);
    c.f = p.f;
    c.field = p.h;
    for (int d = 0; d < n_classes(); ++d)
      c.field += p.g[d] * static_cast<double>(table_.pairs_per_site(d));
  }

  // Pair field phi_i = sum_d f_d psi(i, d), derived fresh from the integer
  // sums so it carries no rounding history.
  cplx phi_at(const Cache& c, int i) const {
    cplx acc(0.0, 0.0);
    for (int d = 0; d < n_classes(); ++d)
      acc += c.f[d] * static_cast<double>(c.psi(i, d));
    return acc;
  }

  void compute_phi(const Cache& c, Eigen::VectorXcd& phi) const {
    phi.resize(n());
    for (int i = 0; i < n(); ++i) phi(i) = phi_at(c, i);
  }

  // log Psi(sigma with site i flipped) - log Psi(sigma).
  cplx flip_delta(const Cache& c, int i) const {
    return -2.0 * static_cast<double>(c.sigma[i]) * (phi_at(c, i) + c.field);
  }

  // log-amplitude change when both sites flip. For an anti-aligned pair this
  // is the spin-exchange ratio; the last term undoes the double count of the
  // shared pair bond.
  cplx double_flip_delta(const Cache& c, int i, int k) const {
    const double ss = c.sigma[i] * c.sigma[k];
    return flip_delta(c, i) + flip_delta(c, k) +
           4.0 * ss * c.f[table_.class_of(i, k)];
  }

  void apply_flip(Cache& c, int i) const {
    const int s = c.sigma[i];
    for (int d = 0; d < n_classes(); ++d)
      c.pair_corr(d) -= 2 * s * c.psi(i, d);
    for (int j = 0; j < n(); ++j) {
      if (j == i) continue;
      c.psi(j, table_.class_of(i, j)) -= 2 * s;
    }
    c.m_tot -= 2 * s;
    c.sigma[i] = static_cast<std::int8_t>(-s);
  }

  // Log-derivatives with respect to the flat parameter layout; every entry
  // is an integer-valued configuration sum, so the vector is real.
  void log_derivatives(const Cache& c, Eigen::VectorXd& out) const {
    const int nc = n_classes();
    out.resize(2 * nc + 1);
    for (int d = 0; d < nc; ++d) out(d) = c.pair_corr(d);
    for (int d = 0; d < nc; ++d)
      out(nc + d) = static_cast<double>(table_.pairs_per_site(d)) * c.m_tot;
    out(2 * nc) = c.m_tot;
  }

  // Rebuilds the cache from its configuration and compares against the
  // incrementally updated sums. Test hook for update-rule drift; the sums
  // are integers, so any defect is an outright bug rather than rounding.
  double cache_defect(const Cache& c, const PairProductParams& p) const {
    Cache fresh = make_cache(p, c.sigma);
    double defect = (fresh.psi - c.psi).cwiseAbs().maxCoeff();
    defect = std::max(defect, static_cast<double>((fresh.pair_corr -
                                                   c.pair_corr)
                                                      .cwiseAbs()
                                                      .maxCoeff()));
    defect = std::max(defect,
                      std::abs(static_cast<double>(fresh.m_tot - c.m_tot)));
    return defect;
  }

  // Normalized full-basis amplitude vector; index bit j set means site j up.
  Eigen::VectorXcd dense_amplitudes(const PairProductParams& p) const {
    check_params(p);
    if (n() > 16)
      throw std::invalid_argument("dense contraction capped at 16 sites");
    const std::ptrdiff_t dim = std::ptrdiff_t{1} << n();
    Eigen::VectorXcd v(dim);
    std::vector<std::int8_t> sigma(n());
    // Subtract the mean log modulus before exponentiating so the overall
    // scale, fixed afterwards by normalization, cannot overflow.
    std::vector<cplx> logs(static_cast<std::size_t>(dim));
    double re_max = -std::numeric_limits<double>::infinity();
    for (std::ptrdiff_t s = 0; s < dim; ++s) {
      for (int j = 0; j < n(); ++j)
        sigma[j] = (s >> j) & 1 ? std::int8_t{1} : std::int8_t{-1};
      logs[s] = log_amplitude(p, sigma);
      re_max = std::max(re_max, logs[s].real());
    }
    for (std::ptrdiff_t s = 0; s < dim; ++s)
      v(s) = std::exp(logs[s] - re_max);
    v /= v.norm();
    return v;
  }

 private:
  CouplingTable table_;
};

// Reference amplitude functor for fidelity targets, evaluated per
// configuration. Every functor built here has constant modulus 2^{-N/2}, so
// the target-side ensemble of a two-sided overlap estimate is plain uniform
// sampling over configurations.
using TargetAmplitude = std::function<cplx(const std::vector<std::int8_t>&)>;

inline TargetAmplitude css_x_target(int n) {
  const double amp = std::pow(2.0, -0.5 * n);
  return [amp](const std::vector<std::int8_t>&) { return cplx(amp, 0.0); };
}

// The -x product state: the +x amplitude times (-1)^{#down}, i.e. times the
// product of all sigma.
inline TargetAmplitude css_minus_x_target(int n) {
  const double amp = std::pow(2.0, -0.5 * n);
  return [amp](const std::vector<std::int8_t>& sigma) {
    int prod = 1;
    for (const auto s : sigma) prod *= s;
    return cplx(amp * prod, 0.0);
  };
}

inline TargetAmplitude css_azimuthal_target(int n, double theta) {
  const double amp = std::pow(2.0, -0.5 * n);
  return [amp, theta](const std::vector<std::int8_t>& sigma) {
    int m = 0;
    for (const auto s : sigma) m += s;
    return amp * std::exp(cplx(0.0, -theta * 0.5 * m));
  };
}

// (|+x> + i s |-x>)/sqrt(2); the two branch amplitudes have equal modulus
// for every configuration.
inline TargetAmplitude ghz_target(int n, int branch) {
  if (branch != 1 && branch != -1)
    throw std::invalid_argument("branch must be +1 or -1");
  const double amp = std::pow(2.0, -0.5 * n);
  return [amp, branch](const std::vector<std::int8_t>& sigma) {
    int prod = 1;
    for (const auto s : sigma) prod *= s;
    return (cplx(amp, 0.0) +
            cplx(0.0, static_cast<double>(branch)) * (amp * prod)) /
           std::sqrt(2.0);
  };
}

}  // namespace dipolarxx
