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
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SVD>

#include "dipolarxx/observables.hpp"
#include "dipolarxx/pairproduct.hpp"
#include "dipolarxx/sampler.hpp"
#include "dipolarxx/util.hpp"

namespace dipolarxx {

// Time-dependent variational evolution of the pair-product state.
//
// The parameter velocity solves the projected Schroedinger equation
//
//   S xdot = -i F,   S_ab = <O_a O_b> - <O_a><O_b>,
//                    F_a  = <O_a E_loc> - <O_a><E_loc>,
//
// where O_a are the (real) logarithmic derivatives of the amplitude and
// E_loc is the local energy. Moments come either from the Metropolis
// ensemble or, on small lattices, from a deterministic sum over all
// configurations. Integration is classical RK4 with a fresh moment
// estimate per stage.
struct TvmcOptions {
  double dt = 0.02;
  double t_end = 1.0;
  double record_stride = 0.1;  // time between observable rows

  int n_walkers = 32;
  int stage_samples_per_walker = 128;   // per flow estimate
  int record_samples_per_walker = 512;  // per observable row
  int stride_sweeps = 1;                // sweeps between harvested samples
  bool with_fidelities = true;
  std::uint64_t seed = 1;
  int n_threads = 1;

  // Deterministic full-summation mode (no walkers); capped at 14 sites.
  bool exact_summation = false;

  // S + reg_rel diag(S) + reg_abs I on the solver path; the pseudo-inverse
  // path instead drops singular values below svd_rel_cut * s_max.
  double reg_rel = 1e-3;
  double reg_abs = 1e-6;
  bool pseudo_inverse = false;
  double svd_rel_cut = 1e-6;

  // Relative deviation of <H> from its initial value that raises the
  // drift flag (a warning, not an abort).
  double drift_warn = 0.02;

  std::string checkpoint_path;  // empty disables checkpointing
};

struct TvmcResult {
  ObservableSeries series;
  PairProductParams params;
  double t = 0.0;
  int steps = 0;
  double initial_energy = kNaN;
  double max_energy_drift = 0.0;  // max |<H> - E0| / max(|E0|, eps)
  bool energy_drift_flagged = false;
  bool resumed = false;
};

class TvmcEngine {
 public:
  TvmcEngine(const PairProductModel& model, const TvmcOptions& opt)
      : model_(model), opt_(opt) {
    if (!(opt.dt > 0.0) || !(opt.t_end >= 0.0) || !(opt.record_stride > 0.0))
      throw std::invalid_argument("dt, t_end and record_stride must be positive");
    if (opt.exact_summation) {
      if (model_.n() > 14)
        throw std::invalid_argument(
            "deterministic summation mode is capped at 14 sites");
    } else {
      ensemble_.emplace(model_, opt.n_walkers, opt.seed, opt.n_threads);
    }
  }

  // Fresh trajectory from p0 at t = 0. Walkers are re-seeded and burnt in.
  void start(const PairProductParams& p0) {
    model_.check_params(p0);
    params_ = p0;
    t_ = 0.0;
    steps_ = 0;
    next_record_ = 0;
    e0_ = kNaN;
    max_drift_ = 0.0;
    drift_flag_ = false;
    resumed_ = false;
    series_ = ObservableSeries{};
    series_.kind =
        opt_.exact_summation ? SeriesKind::exact : SeriesKind::sampled;
    if (!opt_.exact_summation && opt_.with_fidelities)
      series_.extra_columns = {"overlap_heavy_tail"};
    if (ensemble_) ensemble_->initialize(params_);
    started_ = true;
  }

  double t() const { return t_; }
  int steps() const { return steps_; }
  const PairProductParams& params() const { return params_; }
  const ObservableSeries& series() const { return series_; }
  double initial_energy() const { return e0_; }
  double max_energy_drift() const { return max_drift_; }
  bool energy_drift_flagged() const { return drift_flag_; }

  // One flow evaluation at arbitrary parameters. In ensemble mode this
  // re-points and advances the walkers, so it is not a const query.
  Eigen::VectorXcd flow(const PairProductParams& p) {
    Eigen::MatrixXd s;
    Eigen::VectorXcd f;
    double energy = 0.0;
    moments(p, s, f, energy);
    return solve_flow(s, f);
  }

  // Advance one RK4 step of size h (default: the configured dt).
  void step(double h = -1.0) {
    if (!started_)
      throw std::runtime_error("integrator has no state; call start or resume");
    if (h <= 0.0) h = opt_.dt;
    rk4(h);
    t_ += h;
  }

  // Integrate to t_end, recording rows on the record_stride grid (t = 0
  // included) and checkpointing after every new row when a path is set.
  //
  // Step times are taken from the dt grid, never accumulated, so a run
  // that stops early and resumes sees the same step sizes as one that
  // never stopped.
  TvmcResult run() {
    if (!started_)
      throw std::runtime_error("integrator has no state; call start or resume");
    if (record_due()) {
      record();
      if (!opt_.checkpoint_path.empty()) save_checkpoint(opt_.checkpoint_path);
    }
    while (t_ < opt_.t_end - kTimeEps) {
      const double grid_next =
          opt_.dt * (std::floor(t_ / opt_.dt + kTimeEps / opt_.dt) + 1.0);
      const double t_next = std::min(opt_.t_end, grid_next);
      rk4(t_next - t_);
      t_ = t_next;
      if (record_due()) {
        record();
        if (!opt_.checkpoint_path.empty())
          save_checkpoint(opt_.checkpoint_path);
      }
    }
    if (series_.rows.empty() || series_.rows.back().t < t_ - kTimeEps) {
      record_row();
      if (!opt_.checkpoint_path.empty()) save_checkpoint(opt_.checkpoint_path);
    }
    TvmcResult res;
    res.series = series_;
    res.params = params_;
    res.t = t_;
    res.steps = steps_;
    res.initial_energy = e0_;
    res.max_energy_drift = max_drift_;
    res.energy_drift_flagged = drift_flag_;
    res.resumed = resumed_;
    return res;
  }

  // Binary snapshot of the full integrator state plus the rows emitted so
  // far; a resumed run reproduces the uninterrupted byte stream.
  void save_checkpoint(const std::string& path) const {
    std::string buf;
    const char magic[8] = {'D', 'X', 'X', 'T', 'V', 'M', 'C', '1'};
    buf.append(magic, 8);
    auto put = [&buf](const void* p, std::size_t sz) {
      buf.append(static_cast<const char*>(p), sz);
    };
    const LatticeSpec& spec = model_.couplings().spec;
    const std::int32_t n = spec.n();
    const std::int32_t geom = spec.geometry == Geometry::square ? 0 : 1;
    const std::int32_t lx = spec.lx, ly = spec.ly;
    put(&n, 4);
    put(&geom, 4);
    put(&lx, 4);
    put(&ly, 4);
    put(&spec.alpha, 8);
    put(&opt_.dt, 8);
    put(&opt_.record_stride, 8);
    const std::uint8_t exact_mode = opt_.exact_summation ? 1 : 0;
    put(&exact_mode, 1);
    put(&t_, 8);
    const std::int64_t steps = steps_, next_rec = next_record_;
    put(&steps, 8);
    put(&next_rec, 8);
    put(&e0_, 8);
    put(&max_drift_, 8);
    const std::uint8_t flag = drift_flag_ ? 1 : 0;
    put(&flag, 1);
    const Eigen::VectorXcd x = params_.pack();
    const std::int32_t np = static_cast<std::int32_t>(x.size());
    put(&np, 4);
    put(x.data(), static_cast<std::size_t>(np) * sizeof(cplx));
    const std::int32_t w_count =
        ensemble_ ? static_cast<std::int32_t>(opt_.n_walkers) : 0;
    put(&w_count, 4);
    if (ensemble_) {
      const auto snap = ensemble_->snapshot();
      for (const auto& sigma : snap.sigma)
        put(sigma.data(), sigma.size());
      for (const auto& st : snap.rng_state) put(st.data(), 4 * 8);
      put(snap.uniform_rng_state.data(), 4 * 8);
    }
    const std::string csv = series_.to_csv();
    const std::int64_t csv_size = static_cast<std::int64_t>(csv.size());
    put(&csv_size, 8);
    buf += csv;
    atomic_write_file(path, buf);
  }

  void resume(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 48 || buf.compare(0, 8, "DXXTVMC1") != 0)
      throw std::runtime_error("not a valid integrator checkpoint: " + path);
    std::size_t off = 8;
    auto get = [&buf, &off, &path](void* p, std::size_t sz) {
      if (off + sz > buf.size())
        throw std::runtime_error("truncated integrator checkpoint: " + path);
      std::memcpy(p, buf.data() + off, sz);
      off += sz;
    };
    std::int32_t n = 0, geom = 0, lx = 0, ly = 0;
    double alpha = 0.0;
    get(&n, 4);
    get(&geom, 4);
    get(&lx, 4);
    get(&ly, 4);
    get(&alpha, 8);
    const LatticeSpec& spec = model_.couplings().spec;
    if (n != spec.n() || lx != spec.lx || ly != spec.ly ||
        geom != (spec.geometry == Geometry::square ? 0 : 1) ||
        alpha != spec.alpha)
      throw std::runtime_error("checkpoint lattice does not match: " + path);
    double dt = 0.0, stride = 0.0;
    get(&dt, 8);
    get(&stride, 8);
    if (dt != opt_.dt || stride != opt_.record_stride)
      throw std::runtime_error("checkpoint time grid does not match: " + path);
    std::uint8_t exact_mode = 0;
    get(&exact_mode, 1);
    if ((exact_mode != 0) != opt_.exact_summation)
      throw std::runtime_error("checkpoint sampling mode does not match: " +
                               path);
    get(&t_, 8);
    std::int64_t steps = 0, next_rec = 0;
    get(&steps, 8);
    get(&next_rec, 8);
    steps_ = static_cast<int>(steps);
    next_record_ = next_rec;
    get(&e0_, 8);
    get(&max_drift_, 8);
    std::uint8_t flag = 0;
    get(&flag, 1);
    drift_flag_ = flag != 0;
    std::int32_t np = 0;
    get(&np, 4);
    if (np != 2 * model_.n_classes() + 1)
      throw std::runtime_error("checkpoint parameter count mismatch: " + path);
    Eigen::VectorXcd x(np);
    get(x.data(), static_cast<std::size_t>(np) * sizeof(cplx));
    params_ = PairProductParams::unpack(model_.n(), model_.n_classes(), x);
    std::int32_t w_count = 0;
    get(&w_count, 4);
    if ((w_count > 0) != static_cast<bool>(ensemble_) ||
        (ensemble_ && w_count != opt_.n_walkers))
      throw std::runtime_error("checkpoint walker count does not match: " +
                               path);
    if (ensemble_) {
      MetropolisEnsemble::Snapshot snap;
      snap.sigma.resize(static_cast<std::size_t>(w_count));
      for (auto& sigma : snap.sigma) {
        sigma.resize(static_cast<std::size_t>(n));
        get(sigma.data(), sigma.size());
      }
      snap.rng_state.resize(static_cast<std::size_t>(w_count));
      for (auto& st : snap.rng_state) get(st.data(), 4 * 8);
      get(snap.uniform_rng_state.data(), 4 * 8);
      ensemble_->restore(snap, params_);
    }
    std::int64_t csv_size = 0;
    get(&csv_size, 8);
    if (csv_size < 0 || off + static_cast<std::size_t>(csv_size) > buf.size())
      throw std::runtime_error("truncated integrator checkpoint: " + path);
    series_ = ObservableSeries::from_csv(buf.substr(off, csv_size));
    resumed_ = true;
    started_ = true;
  }

 private:
  static constexpr double kTimeEps = 1e-9;

  PairProductParams at(const Eigen::VectorXcd& x) const {
    return PairProductParams::unpack(model_.n(), model_.n_classes(), x);
  }

  void rk4(double h) {
    const Eigen::VectorXcd x = params_.pack();
    const Eigen::VectorXcd k1 = flow(params_);
    const Eigen::VectorXcd k2 = flow(at(x + 0.5 * h * k1));
    const Eigen::VectorXcd k3 = flow(at(x + 0.5 * h * k2));
    const Eigen::VectorXcd k4 = flow(at(x + h * k3));
    params_ = at(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (ensemble_) ensemble_->set_params(params_);
    ++steps_;
  }

  bool record_due() const {
    return static_cast<double>(next_record_) * opt_.record_stride <=
           t_ + kTimeEps;
  }

  void record() {
    record_row();
    while (record_due()) ++next_record_;
  }

  void record_row() {
    ObsRecord r;
    const double tk = kac_time(model_.couplings(), t_);
    if (opt_.exact_summation) {
      r = summed_observables(model_, params_, opt_.with_fidelities, t_, tk);
    } else {
      EstimateOptions eo;
      eo.samples_per_walker = opt_.record_samples_per_walker;
      eo.stride_sweeps = opt_.stride_sweeps;
      eo.with_fidelities = opt_.with_fidelities;
      eo.t = t_;
      eo.t_kac = tk;
      r = ensemble_->estimate_observables(eo);
    }
    if (!std::isfinite(e0_)) {
      e0_ = r.energy;
    } else {
      const double d =
          std::abs(r.energy - e0_) / std::max(std::abs(e0_), 1e-12);
      max_drift_ = std::max(max_drift_, d);
      if (d > opt_.drift_warn && !drift_flag_) {
        drift_flag_ = true;
        std::fprintf(stderr,
                     "warning: relative energy drift %.3g exceeds %.3g at "
                     "t=%.6g\n",
                     d, opt_.drift_warn, t_);
      }
    }
    series_.rows.push_back(std::move(r));
  }

  void moments(const PairProductParams& p, Eigen::MatrixXd& s,
               Eigen::VectorXcd& f, double& energy) {
    const int np = p.n_params();
    Eigen::VectorXd mean_o = Eigen::VectorXd::Zero(np);
    Eigen::MatrixXd oo = Eigen::MatrixXd::Zero(np, np);
    Eigen::VectorXcd oe = Eigen::VectorXcd::Zero(np);
    cplx mean_e(0.0, 0.0);
    if (opt_.exact_summation) {
      Eigen::VectorXd o(np);
      for_each_weighted_configuration(
          model_, p, [&](const PairProductModel::Cache& c, double w) {
            model_.log_derivatives(c, o);
            const cplx el = local_energy(model_, c);
            mean_o += w * o;
            oo.selfadjointView<Eigen::Lower>().rankUpdate(o, w);
            oe += (w * el) * o.cast<cplx>();
            mean_e += w * el;
          });
    } else {
      ensemble_->set_params(p);
      const int w_count = opt_.n_walkers;
      std::vector<Eigen::VectorXd> o_sum(w_count,
                                         Eigen::VectorXd::Zero(np));
      std::vector<Eigen::MatrixXd> oo_sum(w_count,
                                          Eigen::MatrixXd::Zero(np, np));
      std::vector<Eigen::VectorXcd> oe_sum(w_count,
                                           Eigen::VectorXcd::Zero(np));
      std::vector<cplx> e_sum(w_count, cplx(0.0, 0.0));
      std::vector<Eigen::VectorXd> o(w_count, Eigen::VectorXd(np));
      ensemble_->harvest(
          opt_.stage_samples_per_walker, opt_.stride_sweeps,
          [&](int w, const PairProductModel::Cache& c) {
            model_.log_derivatives(c, o[w]);
            const cplx el = local_energy(model_, c);
            o_sum[w] += o[w];
            oo_sum[w].selfadjointView<Eigen::Lower>().rankUpdate(o[w], 1.0);
            oe_sum[w] += el * o[w].cast<cplx>();
            e_sum[w] += el;
          });
      // Walker-order merge keeps results independent of the thread count.
      for (int w = 0; w < w_count; ++w) {
        mean_o += o_sum[w];
        oo += oo_sum[w];
        oe += oe_sum[w];
        mean_e += e_sum[w];
      }
      const double total = static_cast<double>(w_count) *
                           static_cast<double>(opt_.stage_samples_per_walker);
      mean_o /= total;
      oo /= total;
      oe /= total;
      mean_e /= total;
    }
    s = Eigen::MatrixXd(oo.selfadjointView<Eigen::Lower>());
    s.noalias() -= mean_o * mean_o.transpose();
    f = oe - mean_o.cast<cplx>() * mean_e;
    energy = mean_e.real();
    if (!s.allFinite() || !f.allFinite())
      throw std::runtime_error(
          "variational flow encountered non-finite moments");
  }

  Eigen::VectorXcd solve_flow(const Eigen::MatrixXd& s,
                              const Eigen::VectorXcd& f) const {
    const Eigen::VectorXcd rhs = cplx(0.0, -1.0) * f;
    Eigen::VectorXd xr, xi;
    if (opt_.pseudo_inverse) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(
          s, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Eigen::VectorXd& sv = svd.singularValues();
      const double cut =
          opt_.svd_rel_cut * (sv.size() > 0 ? sv(0) : 0.0);
      Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
      for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cut) inv(i) = 1.0 / sv(i);
      auto apply = [&](const Eigen::VectorXd& b) -> Eigen::VectorXd {
        return svd.matrixV() *
               (inv.asDiagonal() * (svd.matrixU().transpose() * b));
      };
      xr = apply(rhs.real());
      xi = apply(rhs.imag());
    } else {
      Eigen::MatrixXd a = s;
      a.diagonal() += opt_.reg_rel * s.diagonal().cwiseAbs();
      a.diagonal().array() += opt_.reg_abs;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
      if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("variational flow solve failed");
      xr = ldlt.solve(rhs.real());
      xi = ldlt.solve(rhs.imag());
    }
    Eigen::VectorXcd xdot(rhs.size());
    for (Eigen::Index i = 0; i < rhs.size(); ++i)
      xdot(i) = cplx(xr(i), xi(i));
    if (!xdot.allFinite())
      throw std::runtime_error(
          "variational flow produced non-finite derivatives");
    return xdot;
  }

  PairProductModel model_;
  TvmcOptions opt_;
  std::optional<MetropolisEnsemble> ensemble_;
  PairProductParams params_;
  ObservableSeries series_;
  double t_ = 0.0;
  int steps_ = 0;
  std::int64_t next_record_ = 0;
  double e0_ = kNaN;
  double max_drift_ = 0.0;
  bool drift_flag_ = false;
  bool resumed_ = false;
  bool started_ = false;
};

}  // namespace dipolarxx
