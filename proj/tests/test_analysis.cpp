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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "dipolarxx/analysis.hpp"
#include "dipolarxx/dicke.hpp"
#include "dipolarxx/lattice.hpp"

using namespace dipolarxx;
using Catch::Matchers::ContainsSubstring;

namespace {

constexpr double kPi = std::numbers::pi;

// Collective reference series on a uniform time grid.
ObservableSeries dicke_series(int n, double inertia, double t_max, double dt) {
  const OatSpec spec{n, inertia};
  const DickeState base = css_x_dicke(n);
  ObservableSeries s;
  for (double t = 0.0; t < t_max; t += dt) {
    ObsRecord r = dicke_observables(oat_evolve(base, spec, t));
    r.t = t;
    s.rows.push_back(r);
  }
  return s;
}

LatticeSpec square_spec(int lx, int ly, double alpha) {
  LatticeSpec s;
  s.geometry = Geometry::square;
  s.lx = lx;
  s.ly = ly;
  s.alpha = alpha;
  return s;
}

}  // namespace

TEST_CASE("linear and power-law fits recover planted coefficients") {
  SECTION("exact line") {
    std::vector<double> x{0.0, 1.0, 2.0, 3.0, 4.0};
    std::vector<double> y;
    for (double v : x) y.push_back(2.0 * v + 1.0);
    const LinearFit f = linear_fit(x, y);
    CHECK(std::abs(f.slope - 2.0) < 1e-13);
    CHECK(std::abs(f.intercept - 1.0) < 1e-13);
    CHECK(std::abs(f.r2 - 1.0) < 1e-13);
    CHECK(f.n == 5);
    for (double r : f.residuals) CHECK(std::abs(r) < 1e-12);
  }

  SECTION("planted power law with a size filter") {
    std::vector<double> sizes{2.0, 4.0, 16.0, 32.0, 64.0, 128.0};
    std::vector<double> vals;
    for (double s : sizes) vals.push_back(3.7 * std::pow(s, -2.0 / 3.0));
    const ScalingFit fit = power_law_fit(sizes, vals, 10.0);
    CHECK(fit.sizes.size() == 4);
    CHECK(fit.sizes.front() == 16.0);
    CHECK(fit.min_size == 10.0);
    CHECK(std::abs(fit.exponent + 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(fit.prefactor - 3.7) < 1e-12);
    CHECK(std::abs(fit.r2 - 1.0) < 1e-12);
  }

  SECTION("guards") {
    CHECK_THROWS_AS(linear_fit({1.0}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(linear_fit({1.0, 1.0}, {0.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(power_law_fit({1.0, 2.0, 4.0}, {1.0, -1.0, 1.0}),
                    std::invalid_argument);
    // the filter may not starve the fit
    CHECK_THROWS_AS(power_law_fit({1.0, 2.0, 4.0, 64.0}, {1, 1, 1, 1}, 32.0),
                    std::invalid_argument);
  }
}

// Two independent evaluations of the same optimum: the refined scan here
// against a frozen bounded minimization of the ladder algebra. The time
// tolerance reflects the flatness of the minimum, the value is sharp.
TEST_CASE("the squeezing optimum of the collective engine is reproducible") {
  const OatOptimum opt = oat_squeezing_optimum(16);
  CHECK(std::abs(opt.t_opt - 4.891466043636126) < 5e-3);
  CHECK(std::abs(opt.xi2_opt - 0.22972906928341888) < 1e-7);
}

TEST_CASE("grid refinement locates the squeezing optimum between samples") {
  SECTION("refined interior minimum") {
    const ObservableSeries s = dicke_series(16, 16.0, 8.0 + 1e-9, 0.05);
    const SqueezingOptimum opt = optimal_squeezing(s);
    CHECK(opt.grid_index == 98);  // t = 4.90 on this grid
    CHECK_FALSE(opt.edge);
    CHECK(std::abs(opt.t_opt - 4.891466043636126) < 5e-3);
    CHECK(std::abs(opt.xi2_opt - 0.22972906928341888) < 2e-6);
  }

  SECTION("a monotone series pins the minimum to the edge") {
    ObservableSeries s;
    for (int j = 0; j < 6; ++j) {
      ObsRecord r;
      r.t = 0.1 * j;
      r.xi2 = 1.0 + 0.2 * j;
      s.rows.push_back(r);
    }
    const SqueezingOptimum opt = optimal_squeezing(s);
    CHECK(opt.edge);
    CHECK(opt.grid_index == 0);
    CHECK(opt.t_opt == 0.0);
    CHECK(opt.xi2_opt == 1.0);
  }

  SECTION("too few usable rows throw") {
    ObservableSeries s;
    ObsRecord r;
    r.t = 0.0;
    r.xi2 = 1.0;
    s.rows.push_back(r);
    ObsRecord nan_row;
    nan_row.t = 0.1;  // xi2 stays NaN and is skipped
    s.rows.push_back(nan_row);
    CHECK_THROWS_AS(optimal_squeezing(s), std::invalid_argument);
  }
}

// Sizes below ~10^3 still carry visible corrections; the window used here
// was cross-checked against an independent ladder implementation, which
// gives nu = 0.683518 and mu = 0.338179 on the same sizes.
TEST_CASE("optimal squeezing scales with system size like a power law") {
  const std::vector<double> sizes{8192.0, 16384.0, 32768.0, 65536.0};
  std::vector<double> xi2, t_kac;
  for (double sz : sizes) {
    const int n = static_cast<int>(sz);
    const OatOptimum opt = oat_squeezing_optimum(n);
    xi2.push_back(opt.xi2_opt);
    t_kac.push_back(opt.t_opt * (n - 1.0) / n);  // Kac factor (N-1)/N
  }
  const SqueezingScaling sc = squeezing_scaling(sizes, xi2, t_kac);
  CHECK(std::abs(sc.nu - 0.683518) < 2e-3);
  CHECK(std::abs(sc.mu - 0.338179) < 2e-3);
  CHECK(std::abs(sc.nu - 2.0 / 3.0) < 0.02);
  CHECK(std::abs(sc.mu - 1.0 / 3.0) < 0.02);
  CHECK(sc.xi2_fit.r2 > 0.999);
  CHECK(sc.time_fit.r2 > 0.999);
  CHECK(sc.xi2_fit.min_size == 16.0);
}

TEST_CASE("rotor clock readings agree across inversion, revival, and cat") {
  const double inertia = 12.0;

  SECTION("full window sees all three") {
    const ObservableSeries s =
        dicke_series(12, inertia, 4.2 * kPi * inertia, 0.5);
    const InertiaEstimate est = extract_inertia(s);
    CHECK(est.value == est.from_inversion);
    CHECK(std::abs(est.from_inversion - inertia) < 0.01);
    CHECK(std::abs(est.from_revival - inertia) < 0.01);
    CHECK(std::abs(est.from_ghz - inertia) < 0.01);
    CHECK(est.spread < 0.01);
  }

  SECTION("a window past the inversion but short of the revival") {
    const ObservableSeries s = dicke_series(12, inertia, 100.0, 0.5);
    const InertiaEstimate est = extract_inertia(s);
    CHECK(std::abs(est.from_inversion - inertia) < 0.01);
    CHECK(std::isnan(est.from_revival));
    CHECK(std::abs(est.from_ghz - inertia) < 0.01);
    CHECK(std::isfinite(est.spread));
  }

  SECTION("no inversion inside the window throws") {
    const ObservableSeries s = dicke_series(12, inertia, 60.0, 0.5);
    CHECK_THROWS_WITH(extract_inertia(s), ContainsSubstring("inversion"));
  }
}

TEST_CASE("inertia rescaling between lattices is transitive") {
  const LatticeSpec a = square_spec(4, 4, 3.0);
  const LatticeSpec b = square_spec(6, 6, 3.0);
  const LatticeSpec c = square_spec(8, 8, 3.0);

  // frozen sums of 1/r^3 (and of 1) over minimum-image pair distances
  CHECK(std::abs(kac_factor(a, 3.0) - 6.066179) < 1e-5);
  CHECK(std::abs(kac_factor(c, 3.0) - 7.601280) < 1e-5);
  CHECK(std::abs(kac_factor(a, 0.0) - 15.0) < 1e-12);
  CHECK(std::abs(kac_factor(c, 0.0) - 63.0) < 1e-12);

  CHECK(kac_rescale_inertia(2.5, a, a) == 2.5);
  const double via_b =
      kac_rescale_inertia(kac_rescale_inertia(1.7, a, b), b, c);
  const double direct = kac_rescale_inertia(1.7, a, c);
  CHECK(std::abs(via_b - direct) < 1e-12 * std::abs(direct));
  CHECK(std::abs(kac_rescale_inertia(1.0, a, c) - 3.351797) < 1e-5);
}

TEST_CASE("a planted cosine is recovered at its frequency") {
  std::vector<double> t, y;
  for (int j = 0; j < 200; ++j) {
    t.push_back(0.05 * j);
    y.push_back(std::cos(2.0 * t.back()));
  }
  const QuenchSpectrum sp = quench_spectrum(t, y);
  REQUIRE_FALSE(sp.peaks.empty());
  CHECK(std::abs(sp.bin - 2.0 * kPi / (800.0 * 0.05)) < 1e-12);
  CHECK(std::abs(sp.resolution - 2.0 * kPi / 10.0) < 1e-12);
  CHECK(std::abs(sp.peaks[0].omega - 2.0) < sp.bin);
  CHECK(std::abs(sp.peaks[0].magnitude - 1.0) < 0.05);
  CHECK(std::abs(sp.dc) < 0.1);
  CHECK_FALSE(sp.low_resolution);

  // the flag tracks the requested period against the window length
  const QuenchSpectrum flagged = quench_spectrum(t, y, 6.0);
  CHECK(flagged.low_resolution);
  const QuenchSpectrum fine = quench_spectrum(t, y, kPi);
  CHECK_FALSE(fine.low_resolution);
}

TEST_CASE("mean-spin quench lines sit at half-integer rotor frequencies") {
  const int n = 12;
  const double inertia = 12.0;
  std::vector<double> t, y;
  for (double tt = 0.0; tt < 10.0 * kPi * inertia; tt += 0.5) {
    t.push_back(tt);
    y.push_back(oat_jx_closed_form(n, inertia, tt));
  }
  const QuenchSpectrum sp = quench_spectrum(t, y);
  const RotorLines lines = rotor_frequencies(inertia, 2);
  REQUIRE(sp.peaks.size() >= 3);
  for (int k = 0; k < 3; ++k) {
    INFO("line " << k);
    CHECK(std::abs(sp.peaks[k].omega - lines.jx_lines[k]) < sp.bin);
    CHECK(sp.peaks[k].weight > 0.0);
  }
  // strengths fall off toward higher lines
  CHECK(sp.peaks[0].magnitude > sp.peaks[1].magnitude);
  CHECK(sp.peaks[1].magnitude > sp.peaks[2].magnitude);
}

TEST_CASE("transverse variance lines sit at even rotor frequencies") {
  const int n = 12;
  const double inertia = 12.0;
  const OatSpec spec{n, inertia};
  const DickeState base = css_x_dicke(n);
  std::vector<double> t, y;
  for (double tt = 0.0; tt < 10.0 * kPi * inertia; tt += 0.5) {
    t.push_back(tt);
    y.push_back(dicke_observables(oat_evolve(base, spec, tt)).var_jy);
  }
  const QuenchSpectrum sp = quench_spectrum(t, y);
  const RotorLines lines = rotor_frequencies(inertia, 1);
  REQUIRE(sp.peaks.size() >= 2);
  for (int k = 0; k < 2; ++k) {
    INFO("line " << k);
    CHECK(std::abs(sp.peaks[k].omega - lines.jy2_lines[k]) < sp.bin);
    CHECK(sp.peaks[k].weight < 0.0);  // variance dips when the spin refocuses
  }
  CHECK(sp.dc > 0.0);
}

TEST_CASE("spectra reject unusable input") {
  CHECK_THROWS_AS(quench_spectrum({0.0, 1.0, 2.0}, {1.0, 2.0, 3.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      quench_spectrum({0.0, 1.0, 2.5, 3.0}, {1.0, 2.0, 3.0, 4.0}),
      std::invalid_argument);
}

TEST_CASE("parity-slope information saturates the variance bound on cats") {
  ObservableSeries s;
  ObsRecord ghz = dicke_observables(ghz_dicke(8, +1));
  ghz.t = 0.3;
  s.rows.push_back(ghz);
  ObsRecord css = dicke_observables(css_x_dicke(8));
  css.t = 0.7;
  s.rows.push_back(css);
  ObsRecord degenerate;  // exact zeros force the undefined-ratio branch
  degenerate.t = 1.1;
  degenerate.dparity = 0.0;
  degenerate.var_jx = 0.0;
  s.rows.push_back(degenerate);

  const auto rows = cramer_rao_report(s);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].t == 0.3);
  CHECK(std::abs(rows[0].lhs - 64.0) < 1e-9);
  CHECK(std::abs(rows[0].rhs - 64.0) < 1e-9);
  CHECK(std::abs(rows[0].ratio - 1.0) < 1e-9);
  // the fully polarized state carries no parity slope and no transverse
  // spread along x; the ratio is left undefined rather than invented
  CHECK(rows[1].lhs == 0.0);
  CHECK(std::abs(rows[1].rhs) < 1e-10);
  CHECK(std::isnan(rows[2].ratio));
}

TEST_CASE("even-eigenvalue census counts cat components") {
  const int n = 20;
  const OatSpec spec = OatSpec::bare(n);

  auto census_for = [&](int q) {
    return cat_peak_census(p_jx_dicke(qcat_dicke(n, q, spec)), n, q);
  };

  const CatCensus c2 = census_for(2);
  CHECK(c2.count() == 2);
  CHECK(c2.peak_m == std::vector<int>{-10, 10});
  CHECK(c2.resolvable);

  const CatCensus c4 = census_for(4);
  CHECK(c4.count() == 3);
  CHECK(c4.peak_m == std::vector<int>{-10, 0, 10});
  CHECK(c4.resolvable);

  // the odd-q components at +-N/4 land between even eigenvalues; their
  // weight collects on the nearest even ones
  const CatCensus c6 = census_for(6);
  CHECK(c6.count() == 4);
  CHECK(c6.peak_m == std::vector<int>{-10, -6, 6, 10});
  CHECK(c6.resolvable);

  // far too many requested components for this size
  const CatCensus c30 = census_for(30);
  CHECK_FALSE(c30.resolvable);
  CHECK(c30.count() == 1);
  CHECK(c30.peak_m == std::vector<int>{10});

  CHECK_THROWS_AS(cat_peak_census(std::vector<double>(n, 0.1), n, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(cat_peak_census(std::vector<double>(16, 0.1), 15, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(cat_peak_census(std::vector<double>(n + 1, 0.1), n, 0),
                  std::invalid_argument);
}

TEST_CASE("cat tails decay exponentially in the planted model") {
  const int n = 20;
  std::vector<double> p(n + 1, 0.0);
  for (int m = 0; m <= n / 2; m += 2)
    p[m + n / 2] = std::exp(-0.8 * (n / 2 - m));
  const TailFit f = ghz_tail_fit(p, n);
  CHECK(f.n_points == 5);  // even m in [0, n/2 - 2]
  CHECK(std::abs(f.slope + 0.8) < 1e-12);
  CHECK(std::abs(f.intercept) < 1e-12);
  CHECK(f.r2 > 1.0 - 1e-12);

  CHECK_THROWS_AS(ghz_tail_fit(std::vector<double>(n + 1, 0.0), n),
                  std::invalid_argument);
  CHECK_THROWS_AS(ghz_tail_fit(std::vector<double>(n, 0.1), n),
                  std::invalid_argument);
}

// The closed-form minimal transverse variance must agree with an explicit
// scan over directions orthogonal to the mean spin.
TEST_CASE("the squeezing parameter agrees with a direction scan") {
  const int n = 10;
  const DickeState st = oat_evolve(css_x_dicke(n), OatSpec::bare(n), 1.7);
  const Eigen::VectorXcd jxv = jx_apply(st), jyv = jy_apply(st),
                         jzv = jz_apply(st);
  const auto& a = st.amplitudes;
  const Eigen::Vector3d mean(a.dot(jxv).real(), a.dot(jyv).real(),
                             a.dot(jzv).real());
  Eigen::Matrix3d sec;
  const Eigen::VectorXcd* v[3] = {&jxv, &jyv, &jzv};
  for (int p = 0; p < 3; ++p)
    for (int q = p; q < 3; ++q) {
      sec(p, q) = 0.5 * (v[p]->dot(*v[q]) + v[q]->dot(*v[p])).real();
      sec(q, p) = sec(p, q);
    }
  const double xi2 = squeezing_parameter(n, mean, sec);

  const Eigen::Matrix3d cov = sec - mean * mean.transpose();
  const Eigen::Vector3d u = mean.normalized();
  const Eigen::Vector3d e1 = u.unitOrthogonal();
  const Eigen::Vector3d e2 = u.cross(e1);
  auto var_at = [&](double theta) {
    const Eigen::Vector3d dir = std::cos(theta) * e1 + std::sin(theta) * e2;
    return dir.dot(cov * dir);
  };
  const int steps = 360;
  const double dth = 2.0 * kPi / steps;
  int jm = 0;
  double vmin = var_at(0.0);
  for (int j = 1; j < steps; ++j) {
    const double vj = var_at(j * dth);
    if (vj < vmin) {
      vmin = vj;
      jm = j;
    }
  }
  const double th = detail::parabolic_vertex(
      (jm - 1) * dth, var_at((jm - 1) * dth), jm * dth, var_at(jm * dth),
      (jm + 1) * dth, var_at((jm + 1) * dth));
  const double xi2_scan =
      n * std::min(vmin, var_at(th)) / mean.squaredNorm();
  CHECK(std::abs(xi2 - xi2_scan) <= 1e-8);
}
