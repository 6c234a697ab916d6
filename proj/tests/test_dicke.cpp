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
#include <numbers>

#include "dipolarxx/dicke.hpp"

using namespace dipolarxx;
using std::numbers::pi;

TEST_CASE("collective spin matrices satisfy the angular momentum algebra") {
  const int n = 6;
  Eigen::MatrixXcd jx, jy, jz;
  collective_spin_matrices(n, jx, jy, jz);
  const Eigen::MatrixXcd comm = jx * jy - jy * jx;
  CHECK((comm - cplx(0, 1) * jz).norm() < 1e-12);
  const Eigen::MatrixXcd j2 = jx * jx + jy * jy + jz * jz;
  const double cas = 0.5 * n * (0.5 * n + 1.0);
  CHECK((j2 - cas * Eigen::MatrixXcd::Identity(n + 1, n + 1)).norm() < 1e-12);
  CHECK((jx - jx.adjoint()).norm() < 1e-14);
  CHECK((jy - jy.adjoint()).norm() < 1e-14);
}

TEST_CASE("tridiagonal applies agree with the dense matrices") {
  const int n = 9;
  Eigen::MatrixXcd jx, jy, jz;
  collective_spin_matrices(n, jx, jy, jz);
  DickeState s;
  s.n = n;
  s.amplitudes = Eigen::VectorXcd::Random(n + 1);
  CHECK((jx_apply(s) - jx * s.amplitudes).norm() < 1e-12);
  CHECK((jy_apply(s) - jy * s.amplitudes).norm() < 1e-12);
  CHECK((jz_apply(s) - jz * s.amplitudes).norm() < 1e-12);
}

TEST_CASE("the +x product state is maximal and fully polarized") {
  const int n = 14;
  const DickeState s = css_x_dicke(n);
  CHECK(s.norm() == Catch::Approx(1.0).margin(1e-12));
  const ObsRecord r = dicke_observables(s);
  CHECK(r.jx == Catch::Approx(0.5 * n).margin(1e-10));
  CHECK(r.jy == Catch::Approx(0.0).margin(1e-12));
  CHECK(r.jz == Catch::Approx(0.0).margin(1e-12));
  CHECK(r.var_jx == Catch::Approx(0.0).margin(1e-10));
  CHECK(r.var_jy == Catch::Approx(0.25 * n).margin(1e-10));
  CHECK(r.var_jz == Catch::Approx(0.25 * n).margin(1e-10));
  CHECK(r.j2 == Catch::Approx(0.5 * n * (0.5 * n + 1.0)).margin(1e-10));
  CHECK(r.xi2 == Catch::Approx(1.0).margin(1e-10));
  CHECK(r.parity == Catch::Approx(0.0).margin(1e-12));
  CHECK(r.f_px == Catch::Approx(1.0).margin(1e-12));
  CHECK(r.f_mx == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("azimuthal rotation moves the mean spin from +x toward +y") {
  const int n = 10;
  const double theta = 0.8;
  const ObsRecord r = dicke_observables(css_azimuthal_dicke(n, theta));
  CHECK(r.jx == Catch::Approx(0.5 * n * std::cos(theta)).margin(1e-10));
  CHECK(r.jy == Catch::Approx(0.5 * n * std::sin(theta)).margin(1e-10));
  const double ovl =
      dicke_fidelity(css_x_dicke(n), css_azimuthal_dicke(n, theta));
  CHECK(ovl == Catch::Approx(std::pow(std::cos(theta / 2), 2 * n))
                   .margin(1e-12));
}

TEST_CASE("twisting observables match an independent evaluation") {
  // Frozen from a dense matrix evaluation in another language: N = 12,
  // rotor inertia 12, three times.
  const int n = 12;
  const OatSpec spec = OatSpec::bare(n);
  {
    const ObsRecord r = dicke_observables(oat_evolve(css_x_dicke(n), spec, 0.7));
    CHECK(r.jx == Catch::Approx(5.971988692517536).margin(1e-10));
    CHECK(r.var_jx == Catch::Approx(0.0568398853375669).margin(1e-10));
    CHECK(r.var_jy == Catch::Approx(3.2785111711050803).margin(1e-10));
    CHECK(r.var_jz == Catch::Approx(3.0).margin(1e-10));
    CHECK(r.jyjz_sym - 2.0 * r.jy * r.jz ==
          Catch::Approx(2.0 * 0.9582782688366226).margin(1e-9));
    CHECK(r.xi2 == Catch::Approx(0.7304416111303058).margin(1e-9));
  }
  {
    const ObsRecord r = dicke_observables(oat_evolve(css_x_dicke(n), spec, 1.7));
    CHECK(r.jx == Catch::Approx(5.8365558789058465).margin(1e-10));
    CHECK(r.var_jx == Catch::Approx(0.35421419493267337).margin(1e-10));
    CHECK(r.xi2 == Catch::Approx(0.48590673979198273).margin(1e-9));
  }
  {
    const ObsRecord r = dicke_observables(oat_evolve(css_x_dicke(n), spec, 5.0));
    CHECK(r.jx == Catch::Approx(4.7175854917087126).margin(1e-10));
    CHECK(r.var_jy == Catch::Approx(12.753932875899295).margin(1e-9));
    CHECK(r.xi2 == Catch::Approx(0.289669393139382).margin(1e-9));
  }
}

TEST_CASE("mean spin under twisting follows the closed form") {
  const int n = 12;
  const OatSpec spec{n, 7.5};
  for (double t : {0.3, 2.1, 9.0, 20.0}) {
    const ObsRecord r = dicke_observables(oat_evolve(css_x_dicke(n), spec, t));
    CHECK(r.jx == Catch::Approx(oat_jx_closed_form(n, spec.inertia, t))
                      .margin(1e-10));
    CHECK(oat_jx_closed_form(n, spec.inertia, t) ==
          Catch::Approx(0.5 * n *
                        std::pow(std::cos(t / (2.0 * spec.inertia)), n - 1))
              .margin(1e-14));
  }
}

TEST_CASE("twisting dynamics is periodic with the full revival time") {
  const int n = 10;
  const OatSpec spec = OatSpec::bare(n);
  const DickeState s0 = css_x_dicke(n);
  const DickeState s1 = oat_evolve(s0, spec, 4.0 * pi * spec.inertia);
  CHECK(dicke_fidelity(s0, s1) == Catch::Approx(1.0).margin(1e-10));
  // Half the revival time inverts the mean spin.
  const ObsRecord r =
      dicke_observables(oat_evolve(s0, spec, 2.0 * pi * spec.inertia));
  CHECK(r.jx == Catch::Approx(-0.5 * n).margin(1e-10));
}

TEST_CASE("cat branch selection alternates with N mod 4") {
  for (int n : {8, 12}) {
    const OatSpec spec = OatSpec::bare(n);
    const GhzMatch m = best_ghz_branch(
        oat_evolve(css_x_dicke(n), spec, spec.t_ghz()));
    CHECK(m.branch == +1);
    CHECK(m.fidelity == Catch::Approx(1.0).margin(1e-10));
  }
  for (int n : {10, 14}) {
    const OatSpec spec = OatSpec::bare(n);
    const GhzMatch m = best_ghz_branch(
        oat_evolve(css_x_dicke(n), spec, spec.t_ghz()));
    CHECK(m.branch == -1);
    CHECK(m.fidelity == Catch::Approx(1.0).margin(1e-10));
  }
}

TEST_CASE("two-component cat has unit variance parity metrology numbers") {
  for (auto [n, s] : std::vector<std::pair<int, int>>{{8, 1}, {10, -1}}) {
    const ObsRecord r = dicke_observables(ghz_dicke(n, s));
    CHECK(r.jx == Catch::Approx(0.0).margin(1e-10));
    CHECK(r.var_jx == Catch::Approx(0.25 * n * n).margin(1e-9));
    CHECK(r.parity == Catch::Approx(0.0).margin(1e-12));
    CHECK(r.dparity == Catch::Approx(-s * static_cast<double>(n))
                           .margin(1e-9));
    // Sensitivity squared over (unit parity variance times 4 Var Jx) is 1.
    const double cr = r.dparity * r.dparity / (1.0 * 4.0 * r.var_jx);
    CHECK(cr == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("q-component snapshots reduce to the two-component cat at q=2") {
  const int n = 10;
  const OatSpec spec = OatSpec::bare(n);
  const DickeState cat2 = qcat_dicke(n, 2, spec);
  CHECK(dicke_fidelity(cat2, ghz_dicke(n, -1)) ==
        Catch::Approx(1.0).margin(1e-10));
  CHECK_THROWS(qcat_dicke(n, 0, spec));
}

TEST_CASE("x-projection distribution is normalized and frozen values agree") {
  // Frozen from a dense diagonalization in another language: N = 8,
  // inertia 8, t = 1.3.
  const int n = 8;
  const OatSpec spec = OatSpec::bare(n);
  const auto p = p_jx_dicke(oat_evolve(css_x_dicke(n), spec, 1.3));
  REQUIRE(p.size() == static_cast<std::size_t>(n + 1));
  double sum = 0.0;
  for (double v : p) sum += v;
  CHECK(sum == Catch::Approx(1.0).margin(1e-10));
  CHECK(p[8] == Catch::Approx(0.9559126210196309).margin(1e-9));
  CHECK(p[6] == Catch::Approx(0.042470897314915865).margin(1e-9));
  CHECK(p[4] == Catch::Approx(0.0015894883824343863).margin(1e-10));
  // Odd x-projections are forbidden when N/2 is even.
  CHECK(p[7] < 1e-12);
  CHECK(p[5] < 1e-12);
  // The +x product state concentrates at the top projection.
  const auto p0 = p_jx_dicke(css_x_dicke(n));
  CHECK(p0[n] == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("rotor line frequencies follow the quadratic level spacing") {
  const RotorLines lines = rotor_frequencies(2.0, 2);
  REQUIRE(lines.jx_lines.size() == 3);
  CHECK(lines.jx_lines[0] == Catch::Approx(0.25));
  CHECK(lines.jx_lines[1] == Catch::Approx(0.75));
  CHECK(lines.jx_lines[2] == Catch::Approx(1.25));
  REQUIRE(lines.jy2_lines.size() == 3);
  CHECK(lines.jy2_lines[0] == Catch::Approx(1.0));
  CHECK(lines.jy2_lines[1] == Catch::Approx(2.0));
  CHECK(lines.jy2_lines[2] == Catch::Approx(3.0));
  CHECK_THROWS(rotor_frequencies(-1.0, 2));
}

TEST_CASE("inner product conjugates its first argument") {
  DickeState a, b;
  a.n = b.n = 2;
  a.amplitudes = Eigen::Vector3cd(cplx(1, 1), cplx(0, 0), cplx(0, 0));
  b.amplitudes = Eigen::Vector3cd(cplx(0, 1), cplx(0, 0), cplx(0, 0));
  // conj(1+i) * i = 1 + i
  CHECK(std::abs(dicke_inner(a, b) - cplx(1, 1)) < 1e-15);
  CHECK(std::abs(dicke_inner(b, a) - std::conj(dicke_inner(a, b))) < 1e-15);
}
