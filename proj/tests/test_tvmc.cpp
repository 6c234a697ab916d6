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
#include <filesystem>
#include <numbers>
#include <vector>

#include "dipolarxx/dicke.hpp"
#include "dipolarxx/tvmc.hpp"

using namespace dipolarxx;

namespace {

CouplingTable table_for(Geometry g, int lx, int ly, double alpha) {
  LatticeSpec spec;
  spec.geometry = g;
  spec.lx = lx;
  spec.ly = ly;
  spec.alpha = alpha;
  return build_coupling_table(spec);
}

void check_within(double mc, double exact, double err, double n_sigma,
                  const std::string& label) {
  INFO(label << ": mc=" << mc << " exact=" << exact << " err=" << err);
  CHECK(std::abs(mc - exact) <= n_sigma * std::max(err, 1e-10));
}

}  // namespace

// Uniform couplings put every pair in one curvature well: the projected
// flow must be the constant pair-weight velocity -i/(4 I) with I = N, and
// the field directions must stay quiet.
TEST_CASE("uniform-coupling flow matches the collective twisting rate") {
  const CouplingTable t = table_for(Geometry::square, 2, 4, 0.0);
  const int n = t.n();
  const PairProductModel model(t);
  TvmcOptions opt;
  opt.exact_summation = true;
  opt.pseudo_inverse = true;
  TvmcEngine eng(model, opt);

  const double inertia = n;
  for (double time : {0.0, 0.7, 2.5}) {
    const Eigen::VectorXcd xdot =
        eng.flow(oat_snapshot_params(t, inertia, time));
    for (int d = 0; d < t.n_classes; ++d) {
      INFO("class " << d << " at t=" << time);
      CHECK(std::abs(xdot(d) - cplx(0.0, -1.0 / (4.0 * inertia))) < 1e-9);
    }
    for (int k = t.n_classes; k < xdot.size(); ++k)
      CHECK(std::abs(xdot(k)) < 1e-7);
  }
}

TEST_CASE("deterministic integration follows the twisting trajectory") {
  const CouplingTable t = table_for(Geometry::square, 2, 4, 0.0);
  const int n = t.n();
  const PairProductModel model(t);
  const double inertia = n;

  TvmcOptions opt;
  opt.exact_summation = true;
  opt.dt = 0.05;
  opt.t_end = 0.5;
  opt.record_stride = 0.25;
  opt.with_fidelities = true;

  SECTION("pseudo-inverse solves track the closed form tightly") {
    opt.pseudo_inverse = true;
    TvmcEngine eng(model, opt);
    eng.start(css_x_params(t));
    const TvmcResult res = eng.run();

    CHECK(res.steps == 10);
    CHECK(res.t == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(res.series.rows.size() == 3);
    CHECK(res.series.kind == SeriesKind::exact);
    CHECK(res.series.rows[1].t == Catch::Approx(0.25).margin(1e-12));

    const cplx f_ref(0.0, -0.5 / (4.0 * inertia));
    for (const auto& v : res.params.f) CHECK(std::abs(v - f_ref) < 1e-8);
    for (const auto& v : res.params.g) CHECK(std::abs(v) < 1e-7);
    CHECK(std::abs(res.params.h) < 1e-7);

    const ObsRecord ref = dicke_observables(
        oat_evolve(css_x_dicke(n), OatSpec::bare(n), 0.5));
    const ObsRecord& row = res.series.rows.back();
    CHECK(row.jx == Catch::Approx(ref.jx).margin(1e-7));
    CHECK(row.jx ==
          Catch::Approx(oat_jx_closed_form(n, inertia, 0.5)).margin(1e-7));
    CHECK(row.var_jx == Catch::Approx(ref.var_jx).margin(1e-7));
    CHECK(row.var_jy == Catch::Approx(ref.var_jy).margin(1e-7));
    CHECK(row.var_jz == Catch::Approx(ref.var_jz).margin(1e-7));
    CHECK(row.xi2 == Catch::Approx(ref.xi2).margin(1e-6));
    CHECK(row.parity == Catch::Approx(ref.parity).margin(1e-9));
    CHECK(row.f_ghz == Catch::Approx(ref.f_ghz).margin(1e-9));
    CHECK(row.f_px == Catch::Approx(ref.f_px).margin(1e-9));

    CHECK(res.initial_energy ==
          Catch::Approx(res.series.rows[0].energy).margin(1e-14));
    CHECK(res.max_energy_drift < 1e-10);
    CHECK_FALSE(res.energy_drift_flagged);
    CHECK_FALSE(res.resumed);
  }

  SECTION("default regularization stays within half a percent") {
    TvmcEngine eng(model, opt);
    eng.start(css_x_params(t));
    const TvmcResult res = eng.run();
    const cplx f_ref(0.0, -0.5 / (4.0 * inertia));
    for (const auto& v : res.params.f) {
      INFO("f=" << v << " ref=" << f_ref);
      CHECK(std::abs(v - f_ref) < 5e-3 * std::abs(f_ref));
    }
  }
}

TEST_CASE("halving the step shrinks the integration error fourth order") {
  const CouplingTable t = table_for(Geometry::square, 3, 4, 3.0);
  const PairProductModel model(t);

  auto final_params = [&](double dt) {
    TvmcOptions opt;
    opt.exact_summation = true;
    opt.pseudo_inverse = true;
    opt.dt = dt;
    opt.t_end = 0.3;
    opt.record_stride = 0.3;
    opt.with_fidelities = false;
    TvmcEngine eng(model, opt);
    eng.start(css_x_params(t));
    return eng.run().params.pack();
  };

  const Eigen::VectorXcd ref = final_params(0.0125);
  const double e1 = (final_params(0.1) - ref).cwiseAbs().maxCoeff();
  const double e2 = (final_params(0.05) - ref).cwiseAbs().maxCoeff();
  INFO("e1=" << e1 << " e2=" << e2);
  CHECK(e1 > 1e-12);  // the flow must actually bend
  CHECK(e2 < e1 / 8.0 + 1e-14);
}

// Adding delta to a pair field g_d and subtracting its per-site weight from
// h leaves every amplitude untouched; the integrator must keep the two
// trajectories physically identical.
TEST_CASE("pair fields and uniform field share a redundant direction") {
  const CouplingTable t = table_for(Geometry::square, 3, 4, 3.0);
  const PairProductModel model(t);

  TvmcOptions opt;
  opt.exact_summation = true;
  opt.dt = 0.05;
  opt.t_end = 0.2;
  opt.record_stride = 0.1;
  opt.with_fidelities = true;

  const PairProductParams base = css_azimuthal_params(t, 0.8);
  PairProductParams shifted = base;
  std::vector<cplx> delta(t.n_classes);
  cplx comp(0.0, 0.0);
  for (int d = 0; d < t.n_classes; ++d) {
    delta[d] = cplx(0.05 + 0.01 * d, 0.013);
    shifted.g[d] += delta[d];
    comp += delta[d] * static_cast<double>(t.pairs_per_site(d));
  }
  shifted.h -= comp;

  TvmcEngine eng_a(model, opt), eng_b(model, opt);
  eng_a.start(base);
  eng_b.start(shifted);
  const TvmcResult ra = eng_a.run();
  const TvmcResult rb = eng_b.run();

  REQUIRE(ra.series.rows.size() == rb.series.rows.size());
  for (std::size_t i = 0; i < ra.series.rows.size(); ++i) {
    const ObsRecord& a = ra.series.rows[i];
    const ObsRecord& b = rb.series.rows[i];
    INFO("row " << i);
    CHECK(a.jx == Catch::Approx(b.jx).margin(1e-8));
    CHECK(a.var_jx == Catch::Approx(b.var_jx).margin(1e-8));
    CHECK(a.var_jy == Catch::Approx(b.var_jy).margin(1e-8));
    CHECK(a.var_jz == Catch::Approx(b.var_jz).margin(1e-8));
    CHECK(a.parity == Catch::Approx(b.parity).margin(1e-8));
    CHECK(a.energy == Catch::Approx(b.energy).margin(1e-8));
    CHECK(a.f_ghz == Catch::Approx(b.f_ghz).margin(1e-8));
  }
  // The parameter gap itself rides along unchanged.
  for (int d = 0; d < t.n_classes; ++d) {
    CHECK(std::abs(ra.params.f[d] - rb.params.f[d]) < 1e-7);
    CHECK(std::abs(rb.params.g[d] - ra.params.g[d] - delta[d]) < 1e-7);
  }
  CHECK(std::abs(rb.params.h - ra.params.h + comp) < 1e-7);
}

TEST_CASE("sampled integration follows the collective reference") {
  const CouplingTable t = table_for(Geometry::square, 2, 4, 0.0);
  const int n = t.n();
  const PairProductModel model(t);

  TvmcOptions opt;
  opt.dt = 0.05;
  opt.t_end = 0.4;
  opt.record_stride = 0.2;
  opt.n_walkers = 16;
  opt.stage_samples_per_walker = 64;
  opt.record_samples_per_walker = 256;
  opt.with_fidelities = true;
  opt.seed = 7;
  opt.drift_warn = 1.0;  // drift flagging is exercised elsewhere
  TvmcEngine eng(model, opt);
  eng.start(css_x_params(t));
  const TvmcResult res = eng.run();

  REQUIRE(res.series.rows.size() == 3);
  CHECK(res.series.kind == SeriesKind::sampled);
  const ObsRecord ref = dicke_observables(
      oat_evolve(css_x_dicke(n), OatSpec::bare(n), 0.4));
  const ObsRecord& row = res.series.rows.back();
  check_within(row.jx, ref.jx, row.jx_err, 4.0, "jx");
  check_within(row.var_jx, ref.var_jx, row.var_jx_err, 4.0, "var_jx");
  check_within(row.var_jz, ref.var_jz, row.var_jz_err, 4.0, "var_jz");
  check_within(row.parity, ref.parity, row.parity_err, 4.0, "parity");
  check_within(row.f_px, ref.f_px, row.f_px_err, 4.0, "f_px");
  CHECK(row.extra.count("overlap_heavy_tail") == 1);
  CHECK(res.series.extra_columns ==
        std::vector<std::string>{"overlap_heavy_tail"});
}

TEST_CASE("a resumed run reproduces the uninterrupted byte stream") {
  namespace fs = std::filesystem;
  const CouplingTable t = table_for(Geometry::square, 2, 4, 3.0);
  const PairProductModel model(t);

  TvmcOptions opt;
  opt.dt = 0.05;
  opt.t_end = 0.3;
  opt.record_stride = 0.1;
  opt.n_walkers = 8;
  opt.stage_samples_per_walker = 32;
  opt.record_samples_per_walker = 64;
  opt.with_fidelities = true;
  opt.seed = 11;
  opt.drift_warn = 1.0;

  TvmcEngine full(model, opt);
  full.start(css_x_params(t));
  const TvmcResult res_full = full.run();
  const std::string csv_full = res_full.series.to_csv();

  const fs::path dir = fs::temp_directory_path() / "dxx_tvmc_test";
  fs::remove_all(dir);
  const fs::path ckpt = dir / "mid.ckpt";

  TvmcOptions opt_head = opt;
  opt_head.t_end = 0.2;
  opt_head.checkpoint_path = ckpt.string();
  TvmcEngine head(model, opt_head);
  head.start(css_x_params(t));
  head.run();
  REQUIRE(fs::exists(ckpt));

  TvmcEngine tail(model, opt);
  tail.resume(ckpt.string());
  CHECK(tail.t() == Catch::Approx(0.2).margin(1e-12));
  const TvmcResult res_tail = tail.run();
  CHECK(res_tail.resumed);
  CHECK(res_tail.steps == res_full.steps);
  CHECK(res_tail.series.rows.size() == res_full.series.rows.size());
  CHECK(res_tail.series.to_csv() == csv_full);
  CHECK(res_tail.max_energy_drift ==
        Catch::Approx(res_full.max_energy_drift).margin(0.0));
  fs::remove_all(dir);
}

TEST_CASE("noisy energy estimates raise the drift flag") {
  const CouplingTable t = table_for(Geometry::square, 2, 4, 3.0);
  const PairProductModel model(t);
  TvmcOptions opt;
  opt.dt = 0.1;
  opt.t_end = 0.2;
  opt.record_stride = 0.1;
  opt.n_walkers = 4;
  opt.stage_samples_per_walker = 8;
  opt.record_samples_per_walker = 16;
  opt.with_fidelities = false;
  opt.seed = 3;
  opt.drift_warn = 0.0;  // any deviation from the first row trips it
  TvmcEngine eng(model, opt);
  eng.start(css_x_params(t));
  const TvmcResult res = eng.run();
  CHECK(res.energy_drift_flagged);
  CHECK(res.max_energy_drift > 0.0);
  CHECK(std::isfinite(res.initial_energy));
}

TEST_CASE("the integrator guards its contracts") {
  namespace fs = std::filesystem;
  const CouplingTable big = table_for(Geometry::square, 4, 4, 3.0);
  TvmcOptions exact_opt;
  exact_opt.exact_summation = true;
  CHECK_THROWS_AS(TvmcEngine(PairProductModel(big), exact_opt),
                  std::invalid_argument);

  const CouplingTable t = table_for(Geometry::square, 2, 4, 3.0);
  const PairProductModel model(t);
  TvmcOptions bad;
  bad.dt = 0.0;
  CHECK_THROWS_AS(TvmcEngine(model, bad), std::invalid_argument);

  TvmcOptions opt;
  opt.n_walkers = 4;
  opt.stage_samples_per_walker = 4;
  opt.record_samples_per_walker = 4;
  opt.with_fidelities = false;
  TvmcEngine eng(model, opt);
  CHECK_THROWS_AS(eng.run(), std::runtime_error);
  CHECK_THROWS_AS(eng.step(), std::runtime_error);

  const fs::path dir = fs::temp_directory_path() / "dxx_tvmc_guard";
  fs::remove_all(dir);
  const fs::path ckpt = dir / "state.ckpt";
  eng.start(css_x_params(t));
  eng.save_checkpoint(ckpt.string());

  const CouplingTable other = table_for(Geometry::square, 2, 4, 0.0);
  TvmcEngine wrong_lattice(PairProductModel(other), opt);
  CHECK_THROWS_WITH(wrong_lattice.resume(ckpt.string()),
                    Catch::Matchers::ContainsSubstring("lattice"));

  TvmcOptions other_walkers = opt;
  other_walkers.n_walkers = 5;
  TvmcEngine wrong_walkers(model, other_walkers);
  CHECK_THROWS_WITH(wrong_walkers.resume(ckpt.string()),
                    Catch::Matchers::ContainsSubstring("walker"));

  TvmcOptions other_grid = opt;
  other_grid.dt = 0.01;
  TvmcEngine wrong_grid(model, other_grid);
  CHECK_THROWS_WITH(wrong_grid.resume(ckpt.string()),
                    Catch::Matchers::ContainsSubstring("time grid"));

  atomic_write_file(ckpt.string(), "garbage");
  TvmcEngine fresh(model, opt);
  CHECK_THROWS(fresh.resume(ckpt.string()));
  fs::remove_all(dir);
}
