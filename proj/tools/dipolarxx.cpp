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
//
// Command-line front end. One process runs one job; every run writes an
// immutable directory (series.csv, meta.json, checkpoints/) whose metadata
// echoes the effective configuration, so outputs are re-derivable. Exit
// codes: 0 success, 2 configuration error, 3 numerical or I/O failure.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dipolarxx/analysis.hpp"
#include "dipolarxx/config.hpp"
#include "dipolarxx/dicke.hpp"
#include "dipolarxx/exact.hpp"
#include "dipolarxx/lattice.hpp"
#include "dipolarxx/observables.hpp"
#include "dipolarxx/pairproduct.hpp"
#include "dipolarxx/tvmc.hpp"
#include "dipolarxx/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dipolarxx;

namespace {

constexpr const char* kVersion = "0.1.0";

// Thrown for anything the user can fix in the configuration or flags.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct GlobalArgs {
  std::string config_path;
  std::string out_override;
  std::int64_t seed_override = -1;
  int threads = 1;
};

RunConfig resolve_config(const GlobalArgs& g) {
  ConfigParse parsed;
  if (!g.config_path.empty()) {
    parsed = load_run_config(g.config_path);
  }  // no file: defaults
  if (!parsed.ok()) {
    std::string joined;
    for (const auto& e : parsed.errors) joined += e + "\n";
    joined.pop_back();
    throw ConfigError(joined);
  }
  RunConfig c = parsed.config;
  if (g.seed_override >= 0) c.seed = static_cast<std::uint64_t>(g.seed_override);
  if (!g.out_override.empty()) c.out_dir = g.out_override;
  return c;
}

// Completed runs are immutable: a directory that already holds metadata is
// refused so nothing is appended or overwritten.
void ensure_fresh_run_dir(const fs::path& dir) {
  if (fs::exists(dir / "meta.json"))
    throw ConfigError("output directory \"" + dir.string() +
                      "\" already holds a completed run; pick a fresh --out");
  fs::create_directories(dir);
}

json meta_skeleton(const RunConfig& c) {
  json m;
  m["build"]["name"] = "dipolarxx";
  m["build"]["version"] = kVersion;
  m["config"] = c.to_json();
  return m;
}

void write_meta(const fs::path& dir, const json& meta) {
  atomic_write_file(dir / "meta.json", meta.dump(2) + "\n");
}

std::string histogram_csv(const Eigen::VectorXd& p, int n) {
  std::string out = "m,p\n";
  for (int k = 0; k <= n; ++k) {
    out += format_double(k - 0.5 * n);
    out += ',';
    out += format_double(p(k));
    out += '\n';
  }
  return out;
}

// The record grid: k * dt_outer for k = 0..floor(t_max/dt_outer), plus the
// end point when it does not land on the grid.
std::vector<double> record_grid(double t_max, double dt) {
  std::vector<double> out;
  const std::int64_t steps =
      static_cast<std::int64_t>(std::floor(t_max / dt + 1e-9));
  for (std::int64_t k = 0; k <= steps; ++k) out.push_back(dt * k);
  if (out.back() < t_max - 1e-9 * dt) out.push_back(t_max);
  return out;
}

// ---------------------------------------------------------------------------
// exact-evolve

struct HistogramRequest {
  double time = 0.0;
  int q = 0;  // 0: no census pairing
  std::string file;
};

std::vector<HistogramRequest> histogram_requests(const RunConfig& c) {
  std::vector<HistogramRequest> reqs;
  for (std::size_t i = 0; i < c.target_times.size(); ++i) {
    HistogramRequest h;
    h.time = c.target_times[i];
    h.q = i < c.q_targets.size() ? c.q_targets[i] : 0;
    h.file = "pjx_t" + std::to_string(i) + ".csv";
    reqs.push_back(h);
  }
  return reqs;
}

void run_exact_evolve(const RunConfig& c, const fs::path& dir) {
  if (c.lattice.n() > c.exact_cap)
    throw ConfigError("exact engine caps at " + std::to_string(c.exact_cap) +
                      " sites; lattice has " + std::to_string(c.lattice.n()));
  ensure_fresh_run_dir(dir);
  const ExactEngine eng(c.lattice, c.exact_cap);
  const CouplingTable& table = eng.couplings();
  const int n = eng.n();

  std::vector<HistogramRequest> hreqs = histogram_requests(c);

  // merge record times and histogram times into one ascending walk
  struct Event {
    double t;
    bool record;
    int hist = -1;  // index into hreqs
  };
  std::vector<Event> events;
  for (double t : record_grid(c.t_max, c.dt_outer))
    events.push_back({t, true, -1});
  for (std::size_t i = 0; i < hreqs.size(); ++i) {
    bool merged = false;
    for (auto& e : events)
      if (std::abs(e.t - hreqs[i].time) < 1e-9) {
        e.hist = static_cast<int>(i);
        merged = true;
        break;
      }
    if (!merged)
      events.push_back({hreqs[i].time, false, static_cast<int>(i)});
  }
  std::sort(events.begin(), events.end(),
            [](const Event& a, const Event& b) { return a.t < b.t; });

  FullState st = css_x_full(n);
  ObservableSeries series;
  series.kind = SeriesKind::exact;
  const bool全 = false;
  (void)全;
  double t_cur = 0.0;
  double e_first = kNaN, e_last = kNaN;
  json hist_meta = json::array();
  for (const Event& ev : events) {
    if (ev.t > t_cur) eng.evolve(st, ev.t - t_cur, c.dt_inner);
    t_cur = ev.t;
    if (ev.record) {
      ObsRecord r = eng.observables(st);
      r.t = t_cur;
      r.t_kac = kac_time(table, t_cur);
      if (!std::isfinite(e_first)) e_first = r.energy;
      e_last = r.energy;
      series.rows.push_back(r);
    }
    const bool periodic_hist = c.pjx_histograms && hreqs.empty() && ev.record;
    if (ev.hist >= 0 || periodic_hist) {
      const Eigen::VectorXd p = eng.p_jx(st);
      std::string file;
      json hm;
      if (ev.hist >= 0) {
        file = hreqs[ev.hist].file;
        hm["q"] = hreqs[ev.hist].q;
      } else {
        file = "pjx_r" + std::to_string(series.rows.size() - 1) + ".csv";
        hm["q"] = 0;
      }
      hm["file"] = file;
      hm["time"] = t_cur;
      hist_meta.push_back(hm);
      atomic_write_file(dir / file, histogram_csv(p, n));
    }
  }

  atomic_write_file(dir / "series.csv", series.to_csv());
  save_exact_checkpoint((dir / "checkpoints" / "last.ckpt").string(),
                        c.lattice, t_cur, st);
  json meta = meta_skeleton(c);
  meta["run"]["engine"] = "exact";
  meta["run"]["n"] = n;
  meta["run"]["kac_factor"] = kac_factor(table);
  meta["run"]["kac_factor_alpha0"] = kac_factor(c.lattice, 0.0);
  meta["run"]["norm"] = table.norm;
  meta["run"]["t_final"] = t_cur;
  meta["run"]["energy_initial"] = e_first;
  meta["run"]["energy_final"] = e_last;
  meta["run"]["histograms"] = hist_meta;
  write_meta(dir, meta);
}

// ---------------------------------------------------------------------------
// spectrum

TosFit run_spectrum(const RunConfig& c, const fs::path& dir) {
  if (c.lattice.n() > c.exact_cap)
    throw ConfigError("exact engine caps at " + std::to_string(c.exact_cap) +
                      " sites; lattice has " + std::to_string(c.lattice.n()));
  ensure_fresh_run_dir(dir);
  const ExactEngine eng(c.lattice, c.exact_cap);
  const std::vector<SpectrumLine> lines = eng.spectrum(6, c.seed);
  const TosFit fit = tos_fit(lines, eng.n());
  atomic_write_file(dir / "spectrum.csv", spectrum_csv(lines));
  json meta = meta_skeleton(c);
  meta["run"]["engine"] = "exact";
  meta["run"]["n"] = eng.n();
  meta["run"]["kac_factor"] = kac_factor(eng.couplings());
  meta["run"]["levels_per_sector"] = 6;
  meta["run"]["tos"]["inertia"] = fit.inertia;
  meta["run"]["tos"]["slope"] = fit.slope;
  meta["run"]["tos"]["intercept"] = fit.intercept;
  meta["run"]["tos"]["rsq"] = fit.rsq;
  meta["run"]["tos"]["points"] = fit.points;
  write_meta(dir, meta);
  return fit;
}

// ---------------------------------------------------------------------------
// oat-ref

void run_oat_ref(const RunConfig& c, const fs::path& dir) {
  ensure_fresh_run_dir(dir);
  const CouplingTable table = build_coupling_table(c.lattice);
  const int n = c.lattice.n();
  const double inertia = c.inertia > 0.0 ? c.inertia : static_cast<double>(n);
  const OatSpec spec{n, inertia};
  const DickeState base = css_x_dicke(n);

  ObservableSeries series;
  series.kind = SeriesKind::exact;
  for (double t : record_grid(c.t_max, c.dt_outer)) {
    ObsRecord r = dicke_observables(oat_evolve(base, spec, t));
    r.t = t;
    r.t_kac = kac_time(table, t);
    series.rows.push_back(r);
  }
  atomic_write_file(dir / "series.csv", series.to_csv());

  json hist_meta = json::array();
  const std::vector<HistogramRequest> hreqs = histogram_requests(c);
  for (const auto& h : hreqs) {
    const std::vector<double> p =
        p_jx_dicke(oat_evolve(base, spec, h.time));
    Eigen::VectorXd pv(n + 1);
    for (int k = 0; k <= n; ++k) pv(k) = p[k];
    atomic_write_file(dir / h.file, histogram_csv(pv, n));
    json hm;
    hm["file"] = h.file;
    hm["time"] = h.time;
    hm["q"] = h.q;
    hist_meta.push_back(hm);
  }

  json qcat_meta = json::array();
  for (int q : c.q_targets) {
    const DickeState cat = qcat_dicke(n, q, spec);
    std::string out = "m,re,im\n";
    for (int k = 0; k <= n; ++k) {
      out += format_double(k - 0.5 * n);
      out += ',';
      out += format_double(cat.amplitudes(k).real());
      out += ',';
      out += format_double(cat.amplitudes(k).imag());
      out += '\n';
    }
    const std::string file = "qcat_q" + std::to_string(q) + ".csv";
    atomic_write_file(dir / file, out);
    json qm;
    qm["file"] = file;
    qm["q"] = q;
    qm["time"] = spec.t_q(q);
    qcat_meta.push_back(qm);
  }

  json meta = meta_skeleton(c);
  meta["run"]["engine"] = "dicke";
  meta["run"]["n"] = n;
  meta["run"]["inertia"] = inertia;
  meta["run"]["kac_factor"] = kac_factor(table);
  meta["run"]["histograms"] = hist_meta;
  meta["run"]["qcat_states"] = qcat_meta;
  write_meta(dir, meta);
}

// ---------------------------------------------------------------------------
// tvmc-evolve

TvmcResult run_tvmc_evolve(const RunConfig& c, const fs::path& dir,
                           int threads, bool resume) {
  ensure_fresh_run_dir(dir);
  const CouplingTable table = build_coupling_table(c.lattice);
  const PairProductModel model(table);

  TvmcOptions opt;
  opt.dt = c.dt_inner;
  opt.t_end = c.t_max;
  opt.record_stride = c.dt_outer;
  opt.n_walkers = c.walkers;
  opt.stage_samples_per_walker =
      (c.samples_per_stage + c.walkers - 1) / c.walkers;
  opt.record_samples_per_walker =
      (c.samples_per_record + c.walkers - 1) / c.walkers;
  opt.stride_sweeps = c.stride_sweeps;
  opt.with_fidelities = c.fidelities;
  opt.seed = c.seed;
  opt.n_threads = threads;
  opt.reg_rel = c.epsilon;
  opt.reg_abs = c.epsilon0;
  opt.pseudo_inverse = c.pseudo_inverse;
  opt.svd_rel_cut = c.svd_cut;
  opt.checkpoint_path = (dir / "checkpoints" / "last.ckpt").string();

  TvmcEngine eng(model, opt);
  if (resume) {
    if (!fs::exists(opt.checkpoint_path))
      throw ConfigError("no checkpoint to resume at " + opt.checkpoint_path);
    eng.resume(opt.checkpoint_path);
  } else {
    eng.start(css_x_params(table));
  }
  TvmcResult res = eng.run();

  // fill the Kac time column and measure the per-site energy drift
  double per_site_drift = 0.0;
  for (auto& r : res.series.rows) {
    r.t_kac = kac_time(table, r.t);
    if (std::isfinite(r.energy) && std::isfinite(res.initial_energy))
      per_site_drift = std::max(
          per_site_drift, std::abs(r.energy - res.initial_energy) / model.n());
  }
  atomic_write_file(dir / "series.csv", res.series.to_csv());

  json meta = meta_skeleton(c);
  meta["run"]["engine"] = "tvmc";
  meta["run"]["n"] = model.n();
  meta["run"]["kac_factor"] = kac_factor(table);
  meta["run"]["norm"] = table.norm;
  meta["run"]["steps"] = res.steps;
  meta["run"]["resumed"] = res.resumed;
  meta["run"]["initial_energy"] = res.initial_energy;
  meta["run"]["max_energy_drift"] = res.max_energy_drift;
  meta["run"]["energy_drift_flagged"] = res.energy_drift_flagged;
  meta["run"]["per_site_energy_drift"] = per_site_drift;
  meta["run"]["burn_in_sweeps"] = c.burn_in < 0 ? 10 * model.n() : c.burn_in;
  meta["run"]["stage_samples_per_walker"] = opt.stage_samples_per_walker;
  meta["run"]["record_samples_per_walker"] = opt.record_samples_per_walker;
  write_meta(dir, meta);
  return res;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeInput {
  std::string label;
  fs::path dir;  // empty for bare CSV inputs
  ObservableSeries series;
  int n = 0;
  json meta;  // null when absent
};

AnalyzeInput load_analyze_input(const std::string& path) {
  AnalyzeInput in;
  fs::path p(path);
  fs::path series_file = p;
  if (fs::is_directory(p)) {
    in.dir = p;
    series_file = p / "series.csv";
    in.label = p.filename().string();
    if (in.label.empty()) in.label = p.parent_path().filename().string();
  } else {
    in.label = p.stem().string();
  }
  in.series = ObservableSeries::from_csv(read_file(series_file));
  const fs::path meta_file =
      in.dir.empty() ? p.parent_path() / "meta.json" : in.dir / "meta.json";
  if (fs::exists(meta_file)) {
    in.meta = json::parse(read_file(meta_file));
    if (in.meta.contains("run") && in.meta["run"].contains("n"))
      in.n = in.meta["run"]["n"].get<int>();
  }
  return in;
}

std::vector<double> load_histogram(const fs::path& file, int expected_n) {
  const std::string text = read_file(file);
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);  // header
  std::vector<double> p;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) continue;
    p.push_back(std::strtod(line.c_str() + comma + 1, nullptr));
  }
  if (static_cast<int>(p.size()) != expected_n + 1)
    throw std::runtime_error("histogram " + file.string() +
                             " does not match the run size");
  return p;
}

void run_analyze(const std::vector<std::string>& inputs, const fs::path& dir) {
  if (inputs.empty()) throw ConfigError("analyze needs at least one input");
  fs::create_directories(dir);
  std::vector<AnalyzeInput> runs;
  for (const auto& path : inputs) runs.push_back(load_analyze_input(path));

  json summary;
  summary["version"] = kVersion;

  // -- squeezing ------------------------------------------------------------
  std::string squeeze_csv = "run,n,t_opt,t_opt_kac,xi2_opt,edge\n";
  std::vector<double> fit_sizes, fit_xi2, fit_tkac;
  json squeezing = json::array();
  for (const auto& r : runs) {
    json row;
    row["run"] = r.label;
    row["n"] = r.n;
    try {
      const SqueezingOptimum opt = optimal_squeezing(r.series);
      double kac_ratio = 1.0;
      for (const auto& rec : r.series.rows)
        if (rec.t > 0.0 && std::isfinite(rec.t_kac)) {
          kac_ratio = rec.t_kac / rec.t;
          break;
        }
      const double t_opt_kac = opt.t_opt * kac_ratio;
      squeeze_csv += r.label + ',' + std::to_string(r.n) + ',' +
                     format_double(opt.t_opt) + ',' +
                     format_double(t_opt_kac) + ',' +
                     format_double(opt.xi2_opt) + ',' +
                     (opt.edge ? "1" : "0") + '\n';
      row["t_opt"] = opt.t_opt;
      row["t_opt_kac"] = t_opt_kac;
      row["xi2_opt"] = opt.xi2_opt;
      row["edge"] = opt.edge;
      if (!opt.edge && r.n > 0) {
        fit_sizes.push_back(r.n);
        fit_xi2.push_back(opt.xi2_opt);
        fit_tkac.push_back(t_opt_kac);
      }
    } catch (const std::exception& e) {
      row["error"] = e.what();
    }
    squeezing.push_back(row);
  }
  summary["squeezing"]["runs"] = squeezing;
  if (fit_sizes.size() >= 3) {
    try {
      const SqueezingScaling sc =
          squeezing_scaling(fit_sizes, fit_xi2, fit_tkac);
      summary["squeezing"]["fit"]["nu"] = sc.nu;
      summary["squeezing"]["fit"]["mu"] = sc.mu;
      summary["squeezing"]["fit"]["xi2_r2"] = sc.xi2_fit.r2;
      summary["squeezing"]["fit"]["time_r2"] = sc.time_fit.r2;
      summary["squeezing"]["fit"]["min_size"] = sc.xi2_fit.min_size;
    } catch (const std::exception& e) {
      summary["squeezing"]["fit"]["error"] = e.what();
    }
  }
  atomic_write_file(dir / "squeezing_scaling.csv", squeeze_csv);

  // -- inertia ----------------------------------------------------------
  std::string inertia_csv = "run,n,inversion,revival,ghz,value,spread\n";
  json inertia_sum = json::array();
  for (const auto& r : runs) {
    json row;
    row["run"] = r.label;
    row["n"] = r.n;
    try {
      const InertiaEstimate est = extract_inertia(r.series);
      inertia_csv += r.label + ',' + std::to_string(r.n) + ',' +
                     format_double(est.from_inversion) + ',' +
                     format_double(est.from_revival) + ',' +
                     format_double(est.from_ghz) + ',' +
                     format_double(est.value) + ',' +
                     format_double(est.spread) + '\n';
      row["value"] = est.value;
      row["spread"] = est.spread;
    } catch (const std::exception& e) {
      inertia_csv += r.label + ',' + std::to_string(r.n) +
                     ",nan,nan,nan,nan,nan\n";
      row["error"] = e.what();
    }
    inertia_sum.push_back(row);
  }
  summary["inertia"]["runs"] = inertia_sum;
  atomic_write_file(dir / "inertia.csv", inertia_csv);

  // -- quench spectroscopy of <J^x> ------------------------------------------
  std::string peaks_csv = "run,n,idx,omega,magnitude,weight,bin,resolution\n";
  json spectro = json::array();
  for (const auto& r : runs) {
    json row;
    row["run"] = r.label;
    try {
      std::vector<double> t, y;
      for (const auto& rec : r.series.rows) {
        if (!std::isfinite(rec.jx)) continue;
        t.push_back(rec.t);
        y.push_back(rec.jx);
      }
      const QuenchSpectrum sp = quench_spectrum(t, y);
      const std::size_t top = std::min<std::size_t>(sp.peaks.size(), 8);
      json omegas = json::array();
      for (std::size_t i = 0; i < top; ++i) {
        peaks_csv += r.label + ',' + std::to_string(r.n) + ',' +
                     std::to_string(i) + ',' +
                     format_double(sp.peaks[i].omega) + ',' +
                     format_double(sp.peaks[i].magnitude) + ',' +
                     format_double(sp.peaks[i].weight) + ',' +
                     format_double(sp.bin) + ',' +
                     format_double(sp.resolution) + '\n';
        omegas.push_back(sp.peaks[i].omega);
      }
      row["omega"] = omegas;
      row["bin"] = sp.bin;
      row["dc"] = sp.dc;
      row["low_resolution"] = sp.low_resolution;
    } catch (const std::exception& e) {
      row["error"] = e.what();
    }
    spectro.push_back(row);
  }
  summary["spectroscopy"]["runs"] = spectro;
  atomic_write_file(dir / "spectrum_peaks.csv", peaks_csv);

  // -- metrological comparison -----------------------------------------------
  std::string cr_csv = "run,n,t,lhs,rhs,ratio\n";
  json metrology = json::array();
  for (const auto& r : runs) {
    const auto rows = cramer_rao_report(r.series);
    double best_ratio = kNaN, var_max = kNaN, t_var_max = kNaN;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      cr_csv += r.label + ',' + std::to_string(r.n) + ',' +
                format_double(rows[i].t) + ',' + format_double(rows[i].lhs) +
                ',' + format_double(rows[i].rhs) + ',' +
                format_double(rows[i].ratio) + '\n';
      if (std::isfinite(rows[i].ratio) &&
          (!std::isfinite(best_ratio) || rows[i].ratio > best_ratio))
        best_ratio = rows[i].ratio;
      const double v = r.series.rows[i].var_jx;
      if (std::isfinite(v) && (!std::isfinite(var_max) || v > var_max)) {
        var_max = v;
        t_var_max = rows[i].t;
      }
    }
    json row;
    row["run"] = r.label;
    row["best_ratio"] = best_ratio;
    row["var_jx_max"] = var_max;
    row["t_at_var_jx_max"] = t_var_max;
    if (r.n > 0 && std::isfinite(var_max))
      row["var_jx_max_over_limit"] = 4.0 * var_max / (double(r.n) * r.n);
    metrology.push_back(row);
  }
  summary["metrology"]["runs"] = metrology;
  atomic_write_file(dir / "cramer_rao.csv", cr_csv);

  // -- coherence --------------------------------------------------------------
  json coh = json::array();
  for (const auto& r : runs) {
    double c_max = kNaN, t_at = kNaN;
    for (const auto& rec : r.series.rows)
      if (std::isfinite(rec.coherence) &&
          (!std::isfinite(c_max) || rec.coherence > c_max)) {
        c_max = rec.coherence;
        t_at = rec.t;
      }
    json row;
    row["run"] = r.label;
    row["c_max"] = c_max;
    row["t_at_c_max"] = t_at;
    coh.push_back(row);
  }
  summary["coherence"]["runs"] = coh;

  // -- cat census -------------------------------------------------------------
  std::string census_csv = "run,n,q,time,resolvable,count,peaks\n";
  json cats = json::array();
  for (const auto& r : runs) {
    if (r.meta.is_null() || !r.meta.contains("run") ||
        !r.meta["run"].contains("histograms") || r.dir.empty())
      continue;
    for (const auto& hm : r.meta["run"]["histograms"]) {
      const int q = hm.value("q", 0);
      if (q < 1) continue;
      json row;
      row["run"] = r.label;
      row["q"] = q;
      row["time"] = hm.value("time", 0.0);
      try {
        const std::vector<double> p =
            load_histogram(r.dir / hm["file"].get<std::string>(), r.n);
        const CatCensus census = cat_peak_census(p, r.n, q);
        std::string peaks;
        for (std::size_t i = 0; i < census.peak_m.size(); ++i) {
          if (i) peaks += ';';
          peaks += std::to_string(census.peak_m[i]);
        }
        census_csv += r.label + ',' + std::to_string(r.n) + ',' +
                      std::to_string(q) + ',' +
                      format_double(hm.value("time", 0.0)) + ',' +
                      (census.resolvable ? "1" : "0") + ',' +
                      std::to_string(census.count()) + ',' + peaks + '\n';
        row["count"] = census.count();
        row["resolvable"] = census.resolvable;
        row["peaks"] = census.peak_m;
        if (q == 2) {
          try {
            const TailFit tail = ghz_tail_fit(p, r.n);
            row["tail_slope"] = tail.slope;
            row["tail_r2"] = tail.r2;
          } catch (const std::exception& e) {
            row["tail_error"] = e.what();
          }
        }
      } catch (const std::exception& e) {
        row["error"] = e.what();
      }
      cats.push_back(row);
    }
  }
  summary["cats"]["runs"] = cats;
  atomic_write_file(dir / "cat_census.csv", census_csv);

  atomic_write_file(dir / "summary.json", summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// reproduce

RunConfig base_config(Geometry g, int lx, int ly, double alpha,
                      std::uint64_t seed) {
  RunConfig c;
  c.lattice.geometry = g;
  c.lattice.lx = lx;
  c.lattice.ly = ly;
  c.lattice.alpha = alpha;
  c.seed = seed;
  return c;
}

void run_reproduce(const std::string& figure, const std::string& preset,
                   const fs::path& out, std::uint64_t seed, int threads) {
  if (fs::exists(out / "manifest.json"))
    throw ConfigError("output directory already holds a reproduction");
  fs::create_directories(out);
  const auto t_start = std::chrono::steady_clock::now();
  json manifest;
  manifest["figure"] = figure;
  manifest["preset"] = preset;
  manifest["version"] = kVersion;
  manifest["seed"] = seed;
  if (preset == "paper") {
    const std::string warning =
        "preset \"paper\" exceeds desk capability; running the largest "
        "feasible sizes instead";
    std::cerr << "warning: " << warning << "\n";
    manifest["warning"] = warning;
  }

  auto note_run = [&manifest](const std::string& name, const RunConfig& c) {
    manifest["runs"][name] = c.to_json();
  };

  // Effective moment of inertia for a lattice, via the reference tower fit
  // on the 4x4 square and Kac rescaling.
  auto tower_inertia = [&](const LatticeSpec& target,
                           const fs::path& specdir) {
    RunConfig c = base_config(Geometry::square, 4, 4, 3.0, seed);
    c.out_dir = specdir.string();
    note_run(specdir.filename().string(), c);
    const TosFit fit = run_spectrum(c, specdir);
    return kac_rescale_inertia(fit.inertia, c.lattice, target);
  };

  if (figure == "tower") {
    RunConfig sq = base_config(Geometry::square, 4, 4, 3.0, seed);
    sq.out_dir = (out / "square").string();
    note_run("square", sq);
    const TosFit fs_ = run_spectrum(sq, out / "square");
    RunConfig tr = base_config(Geometry::triangular, 4, 4, 3.0, seed);
    tr.out_dir = (out / "triangular").string();
    note_run("triangular", tr);
    const TosFit ft = run_spectrum(tr, out / "triangular");
    manifest["results"]["inertia_square"] = fs_.inertia;
    manifest["results"]["inertia_triangular"] = ft.inertia;
  } else if (figure == "jx_dynamics") {
    RunConfig ex = base_config(Geometry::square, 4, 4, 3.0, seed);
    ex.t_max = 40.0;
    ex.dt_outer = 0.1;
    note_run("exact16", ex);
    run_exact_evolve(ex, out / "exact16");
    RunConfig tv = base_config(Geometry::square, 6, 6, 3.0, seed);
    tv.engine = RunEngine::tvmc;
    tv.t_max = 36.0;
    tv.dt_outer = 0.25;
    tv.samples_per_stage = 2048;
    tv.samples_per_record = 8192;
    tv.fidelities = false;
    note_run("tvmc36", tv);
    run_tvmc_evolve(tv, out / "tvmc36", threads, false);
    run_analyze({(out / "exact16").string(), (out / "tvmc36").string()},
                out / "analysis");
  } else if (figure == "squeezing") {
    RunConfig ex = base_config(Geometry::square, 4, 4, 3.0, seed);
    ex.t_max = 8.0;
    ex.dt_outer = 0.05;
    note_run("exact16", ex);
    run_exact_evolve(ex, out / "exact16");
    RunConfig oat = base_config(Geometry::square, 4, 4, 0.0, seed);
    oat.engine = RunEngine::dicke;
    oat.t_max = 8.0;
    oat.dt_outer = 0.05;
    note_run("collective16", oat);
    run_oat_ref(oat, out / "collective16");
    run_analyze({(out / "exact16").string(), (out / "collective16").string()},
                out / "analysis");
  } else if (figure == "pjx_cats") {
    LatticeSpec cats;
    cats.geometry = Geometry::square;
    cats.lx = 5;
    cats.ly = 4;
    cats.alpha = 3.0;
    const double inertia20 = tower_inertia(cats, out / "tower16");
    manifest["results"]["inertia_n20"] = inertia20;
    RunConfig ex = base_config(Geometry::square, 5, 4, 3.0, seed);
    ex.q_targets = {2, 4, 6};
    for (int q : ex.q_targets)
      ex.target_times.push_back(2.0 * std::numbers::pi * inertia20 / q);
    ex.t_max = ex.target_times[0];
    ex.dt_outer = 0.25;
    note_run("cats20", ex);
    run_exact_evolve(ex, out / "cats20");
    run_analyze({(out / "cats20").string()}, out / "analysis");
  } else if (figure == "varjx_parity") {
    RunConfig ex = base_config(Geometry::square, 4, 4, 3.0, seed);
    ex.t_max = 9.0;  // past the cat formation near 7.6
    ex.dt_outer = 0.05;
    note_run("exact16", ex);
    run_exact_evolve(ex, out / "exact16");
    run_analyze({(out / "exact16").string()}, out / "analysis");
  } else if (figure == "coherence" || figure == "benchmark") {
    RunConfig ex = base_config(Geometry::square, 4, 4, 3.0, seed);
    ex.t_max = 16.0;
    ex.dt_outer = 0.1;
    note_run("exact16", ex);
    run_exact_evolve(ex, out / "exact16");
    RunConfig tv = ex;
    tv.engine = RunEngine::tvmc;
    tv.samples_per_stage = 8192;
    tv.samples_per_record = 16384;
    note_run("tvmc16", tv);
    const TvmcResult res = run_tvmc_evolve(tv, out / "tvmc16", threads, false);
    // paired comparison on the shared grid
    const ObservableSeries exact_series =
        ObservableSeries::from_csv(read_file(out / "exact16" / "series.csv"));
    std::string cmp =
        "t,var_jx_exact,var_jx_tvmc,var_rel_err,c_exact,c_tvmc,c_abs_err\n";
    const std::size_t rows =
        std::min(exact_series.rows.size(), res.series.rows.size());
    double worst_var = 0.0, worst_c = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const ObsRecord& a = exact_series.rows[i];
      const ObsRecord& b = res.series.rows[i];
      const double rel =
          std::abs(b.var_jx - a.var_jx) / std::max(std::abs(a.var_jx), 1e-12);
      const double cerr = std::abs(b.coherence - a.coherence);
      worst_var = std::max(worst_var, rel);
      worst_c = std::max(worst_c, cerr);
      cmp += format_double(a.t) + ',' + format_double(a.var_jx) + ',' +
             format_double(b.var_jx) + ',' + format_double(rel) + ',' +
             format_double(a.coherence) + ',' + format_double(b.coherence) +
             ',' + format_double(cerr) + '\n';
    }
    atomic_write_file(out / "comparison.csv", cmp);
    manifest["results"]["max_var_jx_rel_err"] = worst_var;
    manifest["results"]["max_coherence_abs_err"] = worst_c;
  } else {
    throw ConfigError("unknown figure \"" + figure + "\"");
  }

  const auto t_end = std::chrono::steady_clock::now();
  manifest["wall_time_s"] =
      std::chrono::duration<double>(t_end - t_start).count();
  atomic_write_file(out / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dipolarxx: entanglement dynamics of long-range XX spin lattices"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  app.add_option("--config", g.config_path,
                 "run configuration file (JSON, comments allowed)");
  app.add_option("--seed", g.seed_override, "override the configured seed");
  app.add_option("--out", g.out_override,
                 "override the configured output directory");
  app.add_option("--threads", g.threads, "sampler worker threads")
      ->check(CLI::PositiveNumber);

  CLI::App* cmd_exact =
      app.add_subcommand("exact-evolve", "full propagation from the +x state");
  CLI::App* cmd_tvmc = app.add_subcommand(
      "tvmc-evolve", "variational pair-product propagation with sampling");
  bool resume = false;
  cmd_tvmc->add_flag("--resume", resume,
                     "continue from <out>/checkpoints/last.ckpt");
  CLI::App* cmd_oat =
      app.add_subcommand("oat-ref", "collective uniform-coupling reference");
  CLI::App* cmd_spec = app.add_subcommand(
      "spectrum", "per-sector low-energy spectrum and rotor fit");
  CLI::App* cmd_analyze = app.add_subcommand(
      "analyze", "post-process run directories into report tables");
  std::vector<std::string> analyze_inputs;
  cmd_analyze->add_option("inputs", analyze_inputs,
                          "run directories or series CSV files");
  CLI::App* cmd_repro =
      app.add_subcommand("reproduce", "run a whole figure pipeline");
  std::string figure, preset = "desk";
  cmd_repro->add_option("figure", figure, "figure id")
      ->required()
      ->check(CLI::IsMember({"jx_dynamics", "squeezing", "pjx_cats",
                             "varjx_parity", "coherence", "tower",
                             "benchmark"}));
  cmd_repro->add_option("--preset", preset, "size preset")
      ->check(CLI::IsMember({"desk", "paper"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_exact->parsed()) {
      const RunConfig c = resolve_config(g);
      run_exact_evolve(c, c.out_dir);
    } else if (cmd_tvmc->parsed()) {
      const RunConfig c = resolve_config(g);
      run_tvmc_evolve(c, c.out_dir, g.threads, resume);
    } else if (cmd_oat->parsed()) {
      const RunConfig c = resolve_config(g);
      run_oat_ref(c, c.out_dir);
    } else if (cmd_spec->parsed()) {
      const RunConfig c = resolve_config(g);
      run_spectrum(c, c.out_dir);
    } else if (cmd_analyze->parsed()) {
      const std::string out = g.out_override.empty() ? "analysis"
                                                     : g.out_override;
      run_analyze(analyze_inputs, out);
    } else if (cmd_repro->parsed()) {
      const RunConfig c = resolve_config(g);  // seed/out handling
      const std::string out =
          g.out_override.empty() ? "reproduce_" + figure : g.out_override;
      run_reproduce(figure, preset, out, c.seed, g.threads);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
