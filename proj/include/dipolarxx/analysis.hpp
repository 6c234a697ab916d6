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

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dipolarxx/dicke.hpp"
#include "dipolarxx/lattice.hpp"
#include "dipolarxx/observables.hpp"
#include "dipolarxx/util.hpp"

namespace dipolarxx {

// ---------------------------------------------------------------------------
// Elementary fits.

struct LinearFit {
  double slope = kNaN, intercept = kNaN;
  double slope_err = kNaN;
  double r2 = kNaN;
  int n = 0;
  std::vector<double> residuals;
};

inline LinearFit linear_fit(const std::vector<double>& x,
                            const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("linear fit needs at least two points");
  const int n = static_cast<int>(x.size());
  double sx = 0, sy = 0;
  for (int i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) throw std::invalid_argument("degenerate abscissa in fit");
  LinearFit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  f.residuals.resize(x.size());
  for (int i = 0; i < n; ++i) {
    f.residuals[i] = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += f.residuals[i] * f.residuals[i];
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  f.slope_err = n > 2 ? std::sqrt(ss_res / ((n - 2) * sxx)) : 0.0;
  return f;
}

// Power law y = prefactor * N^exponent via least squares on logs. Points
// below min_size are excluded (finite-size guard); at least three must
// survive.
struct ScalingFit {
  std::vector<double> sizes, values;  // the points actually fitted
  double exponent = kNaN, prefactor = kNaN;
  double exponent_err = kNaN;
  double r2 = kNaN;
  std::vector<double> residuals;  // log space
  double min_size = 0.0;          // window metadata
};

inline ScalingFit power_law_fit(const std::vector<double>& sizes,
                                const std::vector<double>& values,
                                double min_size = 0.0) {
  if (sizes.size() != values.size())
    throw std::invalid_argument("size/value arrays disagree");
  ScalingFit fit;
  fit.min_size = min_size;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < min_size) continue;
    if (!(sizes[i] > 0.0) || !(values[i] > 0.0))
      throw std::invalid_argument("power-law fit needs positive data");
    fit.sizes.push_back(sizes[i]);
    fit.values.push_back(values[i]);
    lx.push_back(std::log(sizes[i]));
    ly.push_back(std::log(values[i]));
  }
  if (fit.sizes.size() < 3)
    throw std::invalid_argument("power-law fit needs at least three points");
  const LinearFit lin = linear_fit(lx, ly);
  fit.exponent = lin.slope;
  fit.exponent_err = lin.slope_err;
  fit.prefactor = std::exp(lin.intercept);
  fit.r2 = lin.r2;
  fit.residuals = lin.residuals;
  return fit;
}

// ---------------------------------------------------------------------------
// Squeezing optimum and its size scaling.

struct SqueezingOptimum {
  double t_opt = kNaN, xi2_opt = kNaN;
  std::size_t grid_index = 0;
  bool edge = false;  // minimum sits on the boundary of the grid
};

namespace detail {

// Vertex of the upward parabola through three points; falls back to the
// middle point when the triple has no upward curvature.
inline double parabolic_vertex(double x0, double y0, double x1, double y1,
                               double x2, double y2) {
  const double d0 = (y1 - y0) / (x1 - x0);
  const double d1 = (y2 - y1) / (x2 - x1);
  const double curv = (d1 - d0) / (x2 - x0);  // second divided difference
  if (!(curv > 0.0)) return x1;
  // Newton form q(x) = y0 + d0 (x - x0) + curv (x - x0)(x - x1).
  return 0.5 * (x0 + x1) - 0.5 * d0 / curv;
}

}  // namespace detail

// Grid minimum of the xi^2 column refined by local quadratic interpolation.
// A minimum on the grid edge is returned unrefined with the edge flag set.
inline SqueezingOptimum optimal_squeezing(const ObservableSeries& s) {
  std::vector<double> t, y;
  for (const auto& r : s.rows) {
    if (!std::isfinite(r.xi2)) continue;
    t.push_back(r.t);
    y.push_back(r.xi2);
  }
  if (t.size() < 2)
    throw std::invalid_argument("series carries too few xi^2 values");
  std::size_t i = 0;
  for (std::size_t k = 1; k < y.size(); ++k)
    if (y[k] < y[i]) i = k;
  SqueezingOptimum opt;
  opt.grid_index = i;
  opt.t_opt = t[i];
  opt.xi2_opt = y[i];
  if (i == 0 || i + 1 == y.size()) {
    opt.edge = true;
    return opt;
  }
  const double tv = detail::parabolic_vertex(t[i - 1], y[i - 1], t[i], y[i],
                                             t[i + 1], y[i + 1]);
  opt.t_opt = std::clamp(tv, t[i - 1], t[i + 1]);
  return opt;
}

struct OatOptimum {
  double t_opt = kNaN, xi2_opt = kNaN;
};

// Squeezing optimum of the uniform-coupling reference (inertia I = N) from
// the collective engine: logarithmic scan in tau = t/(2I) followed by a
// golden-section refinement. O(N) per evaluation, so sizes in the tens of
// thousands stay cheap.
inline OatOptimum oat_squeezing_optimum(int n) {
  if (n < 4) throw std::invalid_argument("need at least four spins");
  const OatSpec spec = OatSpec::bare(n);
  const DickeState base = css_x_dicke(n);

  auto xi2_at = [&](double t) {
    const DickeState st = oat_evolve(base, spec, t);
    const Eigen::VectorXcd jxv = jx_apply(st), jyv = jy_apply(st),
                           jzv = jz_apply(st);
    const auto& a = st.amplitudes;
    Eigen::Vector3d mean(a.dot(jxv).real(), a.dot(jyv).real(),
                         a.dot(jzv).real());
    Eigen::Matrix3d sec;
    const Eigen::VectorXcd* v[3] = {&jxv, &jyv, &jzv};
    for (int p = 0; p < 3; ++p)
      for (int q = p; q < 3; ++q) {
        sec(p, q) = 0.5 * (v[p]->dot(*v[q]) + v[q]->dot(*v[p])).real();
        sec(q, p) = sec(p, q);
      }
    return squeezing_parameter(n, mean, sec);
  };

  const int grid = 241;
  double best = kInf;
  int best_i = 0;
  std::vector<double> taus(grid);
  for (int i = 0; i < grid; ++i) {
    taus[i] = std::pow(10.0, -6.0 + 6.0 * i / (grid - 1));
    const double val = xi2_at(2.0 * spec.inertia * taus[i]);
    if (val < best) {
      best = val;
      best_i = i;
    }
  }
  double lo = 2.0 * spec.inertia * taus[std::max(best_i - 1, 0)];
  double hi = 2.0 * spec.inertia * taus[std::min(best_i + 1, grid - 1)];
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
  double fc = xi2_at(c), fd = xi2_at(d);
  for (int it = 0; it < 80 && hi - lo > 1e-12 * hi; ++it) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - gr * (hi - lo);
      fc = xi2_at(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + gr * (hi - lo);
      fd = xi2_at(d);
    }
  }
  OatOptimum out;
  out.t_opt = 0.5 * (lo + hi);
  out.xi2_opt = xi2_at(out.t_opt);
  return out;
}

// nu: xi^2_opt ~ N^-nu. mu: Kac-normalized optimal time ~ N^mu. Sizes below
// min_size are excluded from both fits (finite-size corrections), recorded
// in the fit metadata.
struct SqueezingScaling {
  ScalingFit xi2_fit, time_fit;
  double nu = kNaN, mu = kNaN;
};

inline SqueezingScaling squeezing_scaling(const std::vector<double>& sizes,
                                          const std::vector<double>& xi2_opt,
                                          const std::vector<double>& t_opt_kac,
                                          double min_size = 16.0) {
  SqueezingScaling s;
  s.xi2_fit = power_law_fit(sizes, xi2_opt, min_size);
  s.time_fit = power_law_fit(sizes, t_opt_kac, min_size);
  s.nu = -s.xi2_fit.exponent;
  s.mu = s.time_fit.exponent;
  return s;
}

// ---------------------------------------------------------------------------
// Effective moment of inertia.

// All three clock readings of the rotor: the <J^x> inversion at t = 2 pi I
// (primary), the revival at 4 pi I, and the cat-fidelity peak at pi I.
struct InertiaEstimate {
  double value = kNaN;           // primary (inversion) estimate
  double from_inversion = kNaN;  // argmin <J^x> / (2 pi)
  double from_revival = kNaN;    // argmax after inversion / (4 pi)
  double from_ghz = kNaN;        // argmax F_GHZ / pi
  double spread = kNaN;          // max - min over the available estimates
};

inline InertiaEstimate extract_inertia(const ObservableSeries& s) {
  std::vector<double> t, jx, fghz;
  for (const auto& r : s.rows) {
    if (!std::isfinite(r.jx)) continue;
    t.push_back(r.t);
    jx.push_back(r.jx);
    fghz.push_back(r.f_ghz);
  }
  if (t.size() < 3)
    throw std::invalid_argument("series carries too few <J^x> values");

  std::size_t imin = 0;
  for (std::size_t k = 1; k < jx.size(); ++k)
    if (jx[k] < jx[imin]) imin = k;
  if (imin == 0 || imin + 1 == jx.size() || !(jx[imin] < 0.0))
    throw std::runtime_error("no inversion of <J^x> inside the window");

  InertiaEstimate est;
  const double two_pi = 2.0 * std::numbers::pi;
  {
    // Minimize jx: reuse the vertex helper on the negated column.
    const double tv =
        detail::parabolic_vertex(t[imin - 1], jx[imin - 1], t[imin], jx[imin],
                                 t[imin + 1], jx[imin + 1]);
    est.from_inversion = std::clamp(tv, t[imin - 1], t[imin + 1]) / two_pi;
  }
  est.value = est.from_inversion;

  // Revival: interior maximum after the inversion.
  if (imin + 2 < jx.size()) {
    std::size_t imax = imin + 1;
    for (std::size_t k = imin + 1; k < jx.size(); ++k)
      if (jx[k] > jx[imax]) imax = k;
    if (imax > imin && imax + 1 < jx.size() && jx[imax] > 0.0) {
      const double tv = detail::parabolic_vertex(
          t[imax - 1], -jx[imax - 1], t[imax], -jx[imax], t[imax + 1],
          -jx[imax + 1]);
      est.from_revival =
          std::clamp(tv, t[imax - 1], t[imax + 1]) / (2.0 * two_pi);
    }
  }

  // Cat-fidelity peak, when the column is present and the peak pronounced.
  // The first cat forms at half the inversion time and recurs at odd
  // multiples afterwards, so the search stays below the inversion.
  const double t_inv = est.from_inversion * two_pi;
  std::size_t ig = 0;
  bool has_ghz = false;
  for (std::size_t k = 0; k < fghz.size() && t[k] < t_inv; ++k)
    if (std::isfinite(fghz[k]) && (!has_ghz || fghz[k] > fghz[ig])) {
      ig = k;
      has_ghz = true;
    }
  if (has_ghz && ig > 0 && ig + 1 < fghz.size() && fghz[ig] >= 0.4 &&
      std::isfinite(fghz[ig - 1]) && std::isfinite(fghz[ig + 1])) {
    const double tv = detail::parabolic_vertex(
        t[ig - 1], -fghz[ig - 1], t[ig], -fghz[ig], t[ig + 1], -fghz[ig + 1]);
    est.from_ghz = std::clamp(tv, t[ig - 1], t[ig + 1]) / std::numbers::pi;
  }

  double lo = est.from_inversion, hi = est.from_inversion;
  for (double v : {est.from_revival, est.from_ghz})
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  est.spread = hi - lo;
  return est;
}

// Rescale an effective inertia between lattice sizes: multiply by the ratio
// of interaction Kac factors (reference over target) and the inverse ratio
// of their alpha = 0 counterparts. Transitive by construction.
inline double kac_rescale_inertia(double i_ref, const LatticeSpec& ref,
                                  const LatticeSpec& target) {
  const double k_ref = kac_factor(ref, ref.alpha);
  const double k_tgt = kac_factor(target, target.alpha);
  const double k0_ref = kac_factor(ref, 0.0);
  const double k0_tgt = kac_factor(target, 0.0);
  return i_ref * (k_ref / k_tgt) * (k0_tgt / k0_ref);
}

// ---------------------------------------------------------------------------
// Quench spectroscopy.

struct SpectrumPeak {
  double omega = kNaN;
  double magnitude = kNaN;  // |A(omega)| after taper normalization
  double weight = kNaN;     // signed real part at the peak
};

struct QuenchSpectrum {
  std::vector<double> omega;      // frequency grid up to Nyquist
  std::vector<double> magnitude;  // |A|
  std::vector<double> weight;     // Re A
  std::vector<SpectrumPeak> peaks;  // sorted by magnitude, strongest first
  double bin = kNaN;         // grid spacing (zero-padded)
  double resolution = kNaN;  // physical bin 2 pi / T
  double dc = kNaN;          // subtracted mean of the input
  bool low_resolution = false;
};

// Discrete Fourier transform of a uniformly sampled real series: mean
// subtracted (reported as dc), Hann taper, 4x zero padding, naive DFT.
// Peaks are local maxima of |A| above five times the median magnitude,
// refined parabolically. expected_period > 0 flags windows shorter than
// two periods.
inline QuenchSpectrum quench_spectrum(const std::vector<double>& t,
                                      const std::vector<double>& y,
                                      double expected_period = 0.0) {
  const std::size_t m = t.size();
  if (m < 4 || y.size() != m)
    throw std::invalid_argument("spectrum needs at least four samples");
  const double dt = t[1] - t[0];
  if (!(dt > 0.0)) throw std::invalid_argument("time grid must increase");
  for (std::size_t i = 1; i < m; ++i)
    if (std::abs(t[i] - t[i - 1] - dt) > 1e-9 * dt)
      throw std::invalid_argument("spectrum needs a uniform time grid");

  QuenchSpectrum out;
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(m);
  out.dc = mean;

  std::vector<double> w(m), yw(m);
  double wsum = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    w[j] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * j / (m - 1)));
    yw[j] = (y[j] - mean) * w[j];
    wsum += w[j];
  }

  const std::size_t padded = 4 * m;
  const std::size_t half = padded / 2;  // up to Nyquist
  out.bin = 2.0 * std::numbers::pi / (static_cast<double>(padded) * dt);
  out.resolution = 2.0 * std::numbers::pi / (static_cast<double>(m) * dt);
  out.low_resolution =
      expected_period > 0.0 && static_cast<double>(m) * dt <
                                   2.0 * expected_period;

  out.omega.resize(half + 1);
  out.magnitude.resize(half + 1);
  out.weight.resize(half + 1);
  for (std::size_t k = 0; k <= half; ++k) {
    const double om = out.bin * static_cast<double>(k);
    cplx acc(0.0, 0.0);
    for (std::size_t j = 0; j < m; ++j)
      acc += yw[j] * std::exp(cplx(0.0, -om * (t[j] - t[0])));
    acc *= 2.0 / wsum;  // pure cos(omega t) peaks near unit magnitude
    out.omega[k] = om;
    out.magnitude[k] = std::abs(acc);
    out.weight[k] = acc.real();
  }

  std::vector<double> sorted = out.magnitude;
  std::sort(sorted.begin(), sorted.end());
  const double floor_mag = 5.0 * sorted[sorted.size() / 2];
  for (std::size_t k = 1; k + 1 <= half; ++k) {
    if (out.magnitude[k] <= floor_mag) continue;
    if (out.magnitude[k] < out.magnitude[k - 1] ||
        out.magnitude[k] <= out.magnitude[k + 1])
      continue;
    SpectrumPeak p;
    p.omega = detail::parabolic_vertex(
        out.omega[k - 1], -out.magnitude[k - 1], out.omega[k],
        -out.magnitude[k], out.omega[k + 1], -out.magnitude[k + 1]);
    p.omega = std::clamp(p.omega, out.omega[k - 1], out.omega[k + 1]);
    p.magnitude = out.magnitude[k];
    p.weight = out.weight[k];
    out.peaks.push_back(p);
  }
  std::sort(out.peaks.begin(), out.peaks.end(),
            [](const SpectrumPeak& a, const SpectrumPeak& b) {
              return a.magnitude > b.magnitude;
            });
  return out;
}

// ---------------------------------------------------------------------------
// Metrological chain and cat diagnostics.

// Per-row comparison of the parity-slope information (d<P^z>/dtheta)^2
// against the variance bound 4 Var(J^x); Var(P^z) is pinned to 1.
struct CramerRaoRow {
  double t = kNaN;
  double lhs = kNaN, rhs = kNaN, ratio = kNaN;
};

inline std::vector<CramerRaoRow> cramer_rao_report(
    const ObservableSeries& s) {
  std::vector<CramerRaoRow> rows;
  rows.reserve(s.rows.size());
  for (const auto& r : s.rows) {
    CramerRaoRow c;
    c.t = r.t;
    c.lhs = r.dparity * r.dparity;
    c.rhs = 4.0 * r.var_jx;
    c.ratio = c.rhs != 0.0 ? c.lhs / c.rhs : kNaN;
    rows.push_back(c);
  }
  return rows;
}

// Local maxima of P(J^x) over the even-eigenvalue entries, above an
// absolute threshold. The resolvability guard N >= q^2/(2 pi)^2 is
// evaluated and reported; the census itself is always computed.
struct CatCensus {
  int q = 0;
  bool resolvable = false;
  std::vector<int> peak_m;  // even J^x eigenvalues carrying a peak
  int count() const { return static_cast<int>(peak_m.size()); }
};

// p(k) is the probability of J^x eigenvalue m = k - n/2, k = 0..n.
inline CatCensus cat_peak_census(const std::vector<double>& p, int n, int q,
                                 double threshold = 1e-3) {
  if (static_cast<int>(p.size()) != n + 1)
    throw std::invalid_argument("probability table must have n+1 entries");
  if (n % 2 != 0)
    throw std::invalid_argument("even-eigenvalue census needs even n");
  if (q < 1) throw std::invalid_argument("q must be positive");
  CatCensus c;
  c.q = q;
  c.resolvable = n >= static_cast<double>(q) * q /
                          (4.0 * std::numbers::pi * std::numbers::pi);
  // k with even m = k - n/2 starts at (n/2) mod 2 and steps by two; ties
  // break leftward so a flat twin counts once.
  for (int k = (n / 2) % 2; k <= n; k += 2) {
    if (p[k] < threshold) continue;
    const double left = k - 2 >= 0 ? p[k - 2] : -1.0;
    const double right = k + 2 <= n ? p[k + 2] : -1.0;
    if (p[k] >= left && p[k] > right) c.peak_m.push_back(k - n / 2);
  }
  return c;
}

// Exponential decay of P(J^x) away from the cat peak: fit ln p against the
// distance x = n/2 - m over even m in [0, n/2 - 2]. A healthy cat tail has
// a clearly negative slope and r2 close to one.
struct TailFit {
  double slope = kNaN, intercept = kNaN;
  double r2 = kNaN;
  int n_points = 0;
};

inline TailFit ghz_tail_fit(const std::vector<double>& p, int n) {
  if (static_cast<int>(p.size()) != n + 1)
    throw std::invalid_argument("probability table must have n+1 entries");
  std::vector<double> x, y;
  for (int m = 0; m <= n / 2 - 2; m += 2) {
    const int k = m + n / 2;
    if (!(p[k] > 0.0)) continue;
    x.push_back(static_cast<double>(n / 2 - m));
    y.push_back(std::log(p[k]));
  }
  if (x.size() < 3)
    throw std::invalid_argument("tail fit needs at least three usable points");
  const LinearFit lin = linear_fit(x, y);
  TailFit f;
  f.slope = lin.slope;
  f.intercept = lin.intercept;
  f.r2 = lin.r2;
  f.n_points = lin.n;
  return f;
}

}  // namespace dipolarxx
