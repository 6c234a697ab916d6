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
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dipolarxx/observables.hpp"
#include "dipolarxx/util.hpp"

namespace dipolarxx {

// Collective-spin state restricted to the maximal-spin multiplet J = N/2.
// amplitudes(k) belongs to M = k - N/2, k = 0..N.
struct DickeState {
  int n = 0;
  Eigen::VectorXcd amplitudes;

  double m_of(int k) const { return k - 0.5 * n; }
  double norm() const { return amplitudes.norm(); }
};

// Bare collective limit: quadratic-in-Jz Hamiltonian with moment of
// inertia I = N (units 1/J).
struct OatSpec {
  int n = 0;
  double inertia = 0.0;

  static OatSpec bare(int n) { return {n, static_cast<double>(n)}; }
  double t_ghz() const { return std::numbers::pi * inertia; }
  double t_q(int q) const { return 2.0 * std::numbers::pi * inertia / q; }
};

inline DickeState css_x_dicke(int n) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  DickeState s;
  s.n = n;
  s.amplitudes.resize(n + 1);
  for (int k = 0; k <= n; ++k)
    s.amplitudes(k) =
        std::exp(0.5 * log_binomial(n, k) - 0.5 * n * std::log(2.0));
  return s;
}

// CSS rotated by the azimuthal angle theta about z (theta = pi gives the
// -x coherent state).
inline DickeState css_azimuthal_dicke(int n, double theta) {
  DickeState s = css_x_dicke(n);
  for (int k = 0; k <= n; ++k)
    s.amplitudes(k) *= std::exp(cplx(0.0, -theta * s.m_of(k)));
  return s;
}

inline DickeState oat_evolve(const DickeState& state, const OatSpec& spec,
                             double t) {
  DickeState out = state;
  for (int k = 0; k <= state.n; ++k) {
    const double m = state.m_of(k);
    out.amplitudes(k) *=
        std::exp(cplx(0.0, -t * m * m / (2.0 * spec.inertia)));
  }
  return out;
}

inline DickeState qcat_dicke(int n, int q, const OatSpec& spec) {
  if (q <= 0) throw std::invalid_argument("q must be positive");
  return oat_evolve(css_x_dicke(n), spec, spec.t_q(q));
}

// Tridiagonal ladder applications; O(N) each.
inline Eigen::VectorXcd jx_apply(const DickeState& s) {
  const int n = s.n;
  const double jj = 0.5 * n;
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n + 1);
  for (int k = 0; k + 1 <= n; ++k) {
    const double m = s.m_of(k);
    const double c = 0.5 * std::sqrt(jj * (jj + 1) - m * (m + 1));
    out(k + 1) += c * s.amplitudes(k);
    out(k) += c * s.amplitudes(k + 1);
  }
  return out;
}

inline Eigen::VectorXcd jy_apply(const DickeState& s) {
  const int n = s.n;
  const double jj = 0.5 * n;
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n + 1);
  for (int k = 0; k + 1 <= n; ++k) {
    const double m = s.m_of(k);
    const double c = 0.5 * std::sqrt(jj * (jj + 1) - m * (m + 1));
    out(k + 1) += cplx(0.0, -1.0) * c * s.amplitudes(k);
    out(k) += cplx(0.0, 1.0) * c * s.amplitudes(k + 1);
  }
  return out;
}

inline Eigen::VectorXcd jz_apply(const DickeState& s) {
  Eigen::VectorXcd out = s.amplitudes;
  for (int k = 0; k <= s.n; ++k) out(k) *= s.m_of(k);
  return out;
}

// Dense (N+1)x(N+1) matrices; small N only.
inline void collective_spin_matrices(int n, Eigen::MatrixXcd& jx,
                                     Eigen::MatrixXcd& jy,
                                     Eigen::MatrixXcd& jz) {
  const double jj = 0.5 * n;
  jx = Eigen::MatrixXcd::Zero(n + 1, n + 1);
  jy = Eigen::MatrixXcd::Zero(n + 1, n + 1);
  jz = Eigen::MatrixXcd::Zero(n + 1, n + 1);
  for (int k = 0; k <= n; ++k) {
    const double m = k - jj;
    jz(k, k) = m;
    if (k + 1 <= n) {
      const double c = 0.5 * std::sqrt(jj * (jj + 1) - m * (m + 1));
      jx(k + 1, k) = c;
      jx(k, k + 1) = c;
      jy(k + 1, k) = cplx(0.0, -c);
      jy(k, k + 1) = cplx(0.0, c);
    }
  }
}

// Spin parity about z: product of 2S_i^z over all sites acts on |J=N/2, M>
// as (-1)^(N/2 - M), i.e. (-1)^(#down).
inline Eigen::VectorXcd parity_z_apply(const DickeState& s) {
  Eigen::VectorXcd out = s.amplitudes;
  for (int k = 0; k <= s.n; ++k)
    if ((s.n - k) % 2 == 1) out(k) = -out(k);
  return out;
}

inline cplx dicke_inner(const DickeState& a, const DickeState& b) {
  return a.amplitudes.dot(b.amplitudes);  // Eigen dot conjugates the left
}

inline double dicke_fidelity(const DickeState& a, const DickeState& b) {
  return std::norm(dicke_inner(a, b));
}

// The -x product state in the convention where each site carries
// (|up> - |down>)/sqrt(2), i.e. the +x amplitudes with a (-1)^{#down} sign.
// An azimuthal rotation by pi gives the same ray times (-1)^{N/2}; pinning
// the sign here keeps branch labels comparable across engines.
inline DickeState css_minus_x_dicke(int n) {
  DickeState mx = css_x_dicke(n);
  for (int k = 0; k <= n; ++k)
    if ((n - k) % 2) mx.amplitudes(k) = -mx.amplitudes(k);
  return mx;
}

// Cat reference (CSS_x + i s CSS_-x)/sqrt(2). The branch sign s is chosen
// by fidelity maximization against the given state.
inline DickeState ghz_dicke(int n, int branch) {
  DickeState px = css_x_dicke(n);
  DickeState mx = css_minus_x_dicke(n);
  DickeState out = px;
  out.amplitudes =
      (px.amplitudes + cplx(0.0, static_cast<double>(branch)) * mx.amplitudes) /
      std::sqrt(2.0);
  return out;
}

struct GhzMatch {
  int branch = +1;
  double fidelity = 0.0;
};

inline GhzMatch best_ghz_branch(const DickeState& state) {
  const double fp = dicke_fidelity(ghz_dicke(state.n, +1), state);
  const double fm = dicke_fidelity(ghz_dicke(state.n, -1), state);
  return fp >= fm ? GhzMatch{+1, fp} : GhzMatch{-1, fm};
}

inline ObsRecord dicke_observables(const DickeState& s) {
  ObsRecord r;
  const int n = s.n;
  const Eigen::VectorXcd jxv = jx_apply(s);
  const Eigen::VectorXcd jyv = jy_apply(s);
  const Eigen::VectorXcd jzv = jz_apply(s);
  const auto& a = s.amplitudes;
  r.jx = a.dot(jxv).real();
  r.jy = a.dot(jyv).real();
  r.jz = a.dot(jzv).real();
  const double jx2 = jxv.squaredNorm();
  const double jy2 = jyv.squaredNorm();
  const double jz2 = jzv.squaredNorm();
  r.var_jx = jx2 - r.jx * r.jx;
  r.var_jy = jy2 - r.jy * r.jy;
  r.var_jz = jz2 - r.jz * r.jz;
  r.jyjz_sym = 2.0 * jyv.dot(jzv).real();
  r.jxjy_sym = 2.0 * jxv.dot(jyv).real();
  r.jzjx_sym = 2.0 * jzv.dot(jxv).real();
  r.j2 = jx2 + jy2 + jz2;
  Eigen::Vector3d mean(r.jx, r.jy, r.jz);
  Eigen::Matrix3d sec;
  sec << jx2, 0.5 * r.jxjy_sym, 0.5 * r.jzjx_sym,
      0.5 * r.jxjy_sym, jy2, 0.5 * r.jyjz_sym,
      0.5 * r.jzjx_sym, 0.5 * r.jyjz_sym, jz2;
  r.xi2 = squeezing_parameter(n, mean, sec);
  const Eigen::VectorXcd pz = parity_z_apply(s);
  r.parity = a.dot(pz).real();
  // d<Pz>/dtheta under rotations generated by Jx equals <2i Jx Pz>.
  DickeState tmp = s;
  tmp.amplitudes = pz;
  r.dparity = (cplx(0.0, 2.0) * a.dot(jx_apply(tmp))).real();
  r.f_px = dicke_fidelity(css_x_dicke(n), s);
  r.f_mx = dicke_fidelity(css_minus_x_dicke(n), s);
  const GhzMatch ghz = best_ghz_branch(s);
  r.f_ghz = ghz.fidelity;
  r.coherence = 2.0 * r.f_ghz - r.f_px - r.f_mx;
  return r;
}

// Probability over Jx eigenvalues m = -N/2..N/2. The Jx matrix is real
// symmetric tridiagonal in the Dicke basis; its eigenbasis is computed
// once per call (O(N^3), fine at the sizes where distributions are used).
inline std::vector<double> p_jx_dicke(const DickeState& s) {
  const int n = s.n;
  Eigen::MatrixXd jx = Eigen::MatrixXd::Zero(n + 1, n + 1);
  const double jj = 0.5 * n;
  for (int k = 0; k + 1 <= n; ++k) {
    const double m = k - jj;
    const double c = 0.5 * std::sqrt(jj * (jj + 1) - m * (m + 1));
    jx(k + 1, k) = c;
    jx(k, k + 1) = c;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jx);
  // Eigenvalues ascend, so column k corresponds to m = k - N/2.
  std::vector<double> p(n + 1, 0.0);
  for (int k = 0; k <= n; ++k) {
    const cplx amp =
        es.eigenvectors().col(k).cast<cplx>().dot(s.amplitudes);
    p[k] = std::norm(amp);
  }
  return p;
}

// Predicted spectral-line positions for quench spectroscopy: the mean
// in-plane spin connects adjacent rotor levels (omega I = M + 1/2); its
// transverse second moment connects M to M +/- 2 (omega I = 2(M+1),
// plus a static omega = 0 component).
struct RotorLines {
  std::vector<double> jx_lines;
  std::vector<double> jy2_lines;
};

inline RotorLines rotor_frequencies(double inertia, int m_max) {
  if (inertia <= 0) throw std::invalid_argument("inertia must be positive");
  RotorLines lines;
  for (int m = 0; m <= m_max; ++m) {
    lines.jx_lines.push_back((m + 0.5) / inertia);
    lines.jy2_lines.push_back(2.0 * (m + 1.0) / inertia);
  }
  return lines;
}

// Closed-form mean spin under the quadratic flow; used as a cross-check.
inline double oat_jx_closed_form(int n, double inertia, double t) {
  return 0.5 * n * std::pow(std::cos(t / (2.0 * inertia)), n - 1);
}

}  // namespace dipolarxx
