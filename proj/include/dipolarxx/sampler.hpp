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

#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "dipolarxx/observables.hpp"
#include "dipolarxx/pairproduct.hpp"
#include "dipolarxx/util.hpp"

namespace dipolarxx {

// Per-configuration estimators. Every operator O is evaluated in ratio form
// <sigma|O|Psi> / Psi(sigma), so its |Psi|^2-weighted average is <O>.
// Single-flip ratios R_i cover the transverse spin components; double-flip
// ratios R_ik cover the transverse second moments and, restricted to
// anti-aligned pairs, the spin-exchange energy.
struct LocalMeasurement {
  double jz = 0.0, jz2 = 0.0, parity = 0.0;
  cplx jx, jy, jx2, jy2, jyjz, jxjy, jzjx, dparity, energy, j2;
};

inline LocalMeasurement measure_local(const PairProductModel& model,
                                      const PairProductModel::Cache& c) {
  const int n = model.n();
  const CouplingTable& table = model.couplings();
  LocalMeasurement m;
  const double mt = c.m_tot;
  m.jz = 0.5 * mt;
  m.jz2 = 0.25 * mt * mt;
  double par = 1.0;
  for (const auto s : c.sigma) par *= s;
  m.parity = par;

  Eigen::VectorXcd phi;
  model.compute_phi(c, phi);
  const auto delta1 = [&](int i) {
    return -2.0 * static_cast<double>(c.sigma[i]) * (phi(i) + c.field);
  };
  Eigen::VectorXcd delta(n), r(n);
  for (int i = 0; i < n; ++i) {
    delta(i) = delta1(i);
    r(i) = std::exp(delta(i));
  }
  cplx sum_r(0, 0), sum_sr(0, 0), sum_sr_rest(0, 0), sum_r_rest(0, 0);
  for (int i = 0; i < n; ++i) {
    const double s = c.sigma[i];
    sum_r += r(i);
    sum_sr += s * r(i);
    sum_sr_rest += s * r(i) * (mt - s);  // sum over j != i of sigma_j
    sum_r_rest += r(i) * (mt - s);
  }
  m.jx = 0.5 * sum_r;
  m.jy = cplx(0.0, -0.5) * sum_sr;
  // d<Pz>/dtheta under exp(-i theta Jx) equals Re 2i<Jx Pz>; a flip swaps
  // the parity eigenvalue, hence the -parity factor.
  m.dparity = cplx(0.0, -1.0) * par * sum_r;
  m.jyjz = cplx(0.0, -0.5) * sum_sr_rest;
  m.jzjx = 0.5 * sum_r_rest;

  cplx sum_b(0, 0), sum_ss_b(0, 0), sum_sp_b(0, 0), exch(0, 0);
  for (int i = 0; i < n; ++i)
    for (int k = i + 1; k < n; ++k) {
      const double ss = c.sigma[i] * c.sigma[k];
      const cplx rb = std::exp(delta(i) + delta(k) +
                               4.0 * ss * c.f[table.class_of(i, k)]);
      sum_b += rb;
      sum_ss_b += ss * rb;
      sum_sp_b += static_cast<double>(c.sigma[i] + c.sigma[k]) * rb;
      if (c.sigma[i] != c.sigma[k]) exch += table.j(i, k) * rb;
    }
  m.jx2 = 0.25 * n + 0.5 * sum_b;
  m.jy2 = 0.25 * n - 0.5 * sum_ss_b;
  m.jxjy = cplx(0.0, -0.5) * sum_sp_b;
  m.energy = -exch / (2.0 * table.norm);
  m.j2 = m.jx2 + m.jy2 + m.jz2;
  return m;
}

// Spin-exchange part only; the per-sample cost driver inside the
// time-evolution loop.
inline cplx local_energy(const PairProductModel& model,
                         const PairProductModel::Cache& c) {
  const int n = model.n();
  const CouplingTable& table = model.couplings();
  Eigen::VectorXcd phi;
  model.compute_phi(c, phi);
  Eigen::VectorXcd delta(n);
  for (int i = 0; i < n; ++i)
    delta(i) = -2.0 * static_cast<double>(c.sigma[i]) * (phi(i) + c.field);
  cplx exch(0, 0);
  for (int i = 0; i < n; ++i)
    for (int k = i + 1; k < n; ++k) {
      if (c.sigma[i] == c.sigma[k]) continue;
      // Anti-aligned pair: the double flip is the exchange; ss = -1.
      exch += table.j(i, k) * std::exp(delta(i) + delta(k) -
                                       4.0 * c.f[table.class_of(i, k)]);
    }
  return -exch / (2.0 * table.norm);
}

namespace detail {

enum ScalarIndex {
  kJx = 0,
  kJy,
  kJz,
  kJx2,
  kJy2,
  kJz2,
  kYZ,
  kXY,
  kZX,
  kParity,
  kDparity,
  kEnergy,
  kJ2,
  kNumScalars
};

inline void scalar_values(const LocalMeasurement& m, double* out) {
  out[kJx] = m.jx.real();
  out[kJy] = m.jy.real();
  out[kJz] = m.jz;
  out[kJx2] = m.jx2.real();
  out[kJy2] = m.jy2.real();
  out[kJz2] = m.jz2;
  out[kYZ] = m.jyjz.real();
  out[kXY] = m.jxjy.real();
  out[kZX] = m.jzjx.real();
  out[kParity] = m.parity;
  out[kDparity] = m.dparity.real();
  out[kEnergy] = m.energy.real();
  out[kJ2] = m.j2.real();
}

inline double xi2_from_moments(int n, const double* m) {
  const Eigen::Vector3d mean(m[kJx], m[kJy], m[kJz]);
  Eigen::Matrix3d sec;
  sec << m[kJx2], 0.5 * m[kXY], 0.5 * m[kZX],
      0.5 * m[kXY], m[kJy2], 0.5 * m[kYZ],
      0.5 * m[kZX], 0.5 * m[kYZ], m[kJz2];
  return squeezing_parameter(n, mean, sec);
}

// First-order error propagation through the squeezing parameter, with the
// gradient taken numerically at a scale well below the statistical errors.
inline void xi2_value_error(int n, const double* m, const double* e,
                            double& value, double& error) {
  value = xi2_from_moments(n, m);
  if (!std::isfinite(value)) {
    error = kNaN;
    return;
  }
  double x[kNumScalars];
  for (int q = 0; q < kNumScalars; ++q) x[q] = m[q];
  double acc = 0.0;
  for (int q = kJx; q <= kZX; ++q) {
    const double h = 1e-5 * std::max(1.0, std::abs(m[q]));
    x[q] = m[q] + h;
    const double fp = xi2_from_moments(n, x);
    x[q] = m[q] - h;
    const double fm = xi2_from_moments(n, x);
    x[q] = m[q];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      error = kNaN;
      return;
    }
    const double grad = (fp - fm) / (2.0 * h);
    acc += grad * grad * e[q] * e[q];
  }
  error = std::sqrt(acc);
}

// Moment means (plus optional per-moment errors) to observable record.
inline void fill_record(ObsRecord& r, int n, const double* m,
                        const double* e) {
  r.jx = m[kJx];
  r.jy = m[kJy];
  r.jz = m[kJz];
  r.var_jx = m[kJx2] - m[kJx] * m[kJx];
  r.var_jy = m[kJy2] - m[kJy] * m[kJy];
  r.var_jz = m[kJz2] - m[kJz] * m[kJz];
  r.jyjz_sym = m[kYZ];
  r.jxjy_sym = m[kXY];
  r.jzjx_sym = m[kZX];
  r.j2 = m[kJ2];
  r.parity = m[kParity];
  r.dparity = m[kDparity];
  r.energy = m[kEnergy];
  double xi2_err = kNaN;
  if (e == nullptr) {
    r.xi2 = xi2_from_moments(n, m);
  } else {
    xi2_value_error(n, m, e, r.xi2, xi2_err);
    r.jx_err = e[kJx];
    r.var_jx_err = std::sqrt(e[kJx2] * e[kJx2] +
                             std::pow(2.0 * m[kJx] * e[kJx], 2));
    r.var_jy_err = std::sqrt(e[kJy2] * e[kJy2] +
                             std::pow(2.0 * m[kJy] * e[kJy], 2));
    r.var_jz_err = std::sqrt(e[kJz2] * e[kJz2] +
                             std::pow(2.0 * m[kJz] * e[kJz], 2));
    r.jyjz_sym_err = e[kYZ];
    r.j2_err = e[kJ2];
    r.parity_err = e[kParity];
    r.dparity_err = e[kDparity];
    r.energy_err = e[kEnergy];
    r.xi2_err = xi2_err;
  }
}

}  // namespace detail

struct EstimateOptions {
  int samples_per_walker = 256;
  int stride_sweeps = 1;  // sweeps between harvested samples
  bool with_fidelities = false;
  int uniform_samples = 0;  // target-side draws; 0 means walkers * samples
  double t = 0.0;
  double t_kac = 0.0;
};

struct OverlapEstimate {
  double value = kNaN;
  double error = kNaN;
  // Raised when the log-ratio distribution is too broad for the two-sided
  // estimate to be trusted, or when the jackknife error is useless.
  bool heavy_tail = false;
  double log_ratio_var = 0.0;
};

// Fixed-population Metropolis sampler over spin configurations, weighted by
// |Psi(sigma)|^2 of a pair-product amplitude. Walkers persist across
// parameter updates, carry their own deterministic random streams, and are
// partitioned over threads in a way that leaves every result identical to
// the single-thread run (per-walker storage, merged in walker order).
class MetropolisEnsemble {
 public:
  MetropolisEnsemble(PairProductModel model, int n_walkers,
                     std::uint64_t seed, int n_threads = 1)
      : model_(std::move(model)),
        n_threads_(std::max(1, n_threads)) {
    if (n_walkers < 1)
      throw std::invalid_argument("need at least one walker");
    for (int w = 0; w < n_walkers; ++w)
      rngs_.push_back(Xoshiro256::derived(seed, static_cast<std::uint64_t>(w)));
    uniform_rng_ = Xoshiro256::derived(seed, 1000000007ull);
    accepted_.assign(n_walkers, 0);
    proposed_.assign(n_walkers, 0);
  }

  const PairProductModel& model() const { return model_; }
  const PairProductParams& params() const { return params_; }
  int n_walkers() const { return static_cast<int>(rngs_.size()); }

  // Fresh random configurations followed by a burn-in (default 10 N sweeps).
  void initialize(const PairProductParams& p, int burn_sweeps = -1) {
    model_.check_params(p);
    params_ = p;
    caches_.clear();
    const int n = model_.n();
    for (int w = 0; w < n_walkers(); ++w) {
      std::vector<std::int8_t> sigma(n);
      for (auto& s : sigma)
        s = rngs_[w].uniform() < 0.5 ? std::int8_t{-1} : std::int8_t{1};
      caches_.push_back(model_.make_cache(p, sigma));
    }
    std::fill(accepted_.begin(), accepted_.end(), 0);
    std::fill(proposed_.begin(), proposed_.end(), 0);
    sweep(burn_sweeps < 0 ? 10 * n : burn_sweeps);
  }

  // Point the walkers at new parameters; configurations are kept, complex
  // fields are refreshed.
  void set_params(const PairProductParams& p) {
    model_.check_params(p);
    params_ = p;
    for (auto& c : caches_) model_.refresh_fields(c, p);
  }

  void sweep(int count) {
    run_partitioned([&](int w) {
      for (int s = 0; s < count; ++s) sweep_walker(w);
    });
  }

  double acceptance_rate() const {
    std::int64_t acc = 0, prop = 0;
    for (int w = 0; w < n_walkers(); ++w) {
      acc += accepted_[w];
      prop += proposed_[w];
    }
    return prop == 0 ? 0.0 : static_cast<double>(acc) / prop;
  }

  const PairProductModel::Cache& walker(int w) const { return caches_[w]; }

  // Advance all walkers and hand each harvested configuration to
  // per_sample(walker_index, cache). The callback runs concurrently for
  // different walkers and must only touch per-walker storage.
  template <typename F>
  void harvest(int samples_per_walker, int stride_sweeps, F&& per_sample) {
    if (caches_.empty())
      throw std::runtime_error("ensemble is not initialized");
    run_partitioned([&](int w) {
      for (int s = 0; s < samples_per_walker; ++s) {
        for (int k = 0; k < stride_sweeps; ++k) sweep_walker(w);
        per_sample(w, caches_[w]);
      }
    });
  }

  ObsRecord estimate_observables(const EstimateOptions& opt) {
    using namespace detail;
    const int w_count = n_walkers();
    std::vector<std::array<std::vector<double>, kNumScalars>> series(w_count);
    for (auto& s : series)
      for (auto& q : s) q.reserve(opt.samples_per_walker);

    // Fidelity targets share the walker pass: [cat +, cat -, +x, -x].
    const int n = model_.n();
    std::array<TargetAmplitude, 4> targets = {
        ghz_target(n, 1), ghz_target(n, -1), css_x_target(n),
        css_minus_x_target(n)};
    std::vector<std::array<RatioSums, 4>> psi_side(w_count);

    harvest(opt.samples_per_walker, opt.stride_sweeps,
            [&](int w, const PairProductModel::Cache& c) {
              const LocalMeasurement lm = measure_local(model_, c);
              double vals[kNumScalars];
              scalar_values(lm, vals);
              for (int q = 0; q < kNumScalars; ++q)
                series[w][q].push_back(vals[q]);
              if (!opt.with_fidelities) return;
              const cplx log_psi = model_.log_amplitude(params_, c.sigma);
              for (int tt = 0; tt < 4; ++tt)
                psi_side[w][tt].add(std::log(targets[tt](c.sigma)) - log_psi);
            });

    double m[kNumScalars], e[kNumScalars];
    for (int q = 0; q < kNumScalars; ++q) {
      std::vector<std::vector<double>> chains;
      chains.reserve(w_count);
      for (int w = 0; w < w_count; ++w) chains.push_back(series[w][q]);
      const MeanErr me = combine_chains(chains);
      m[q] = me.value;
      e[q] = me.error;
    }
    ObsRecord rec;
    rec.t = opt.t;
    rec.t_kac = opt.t_kac;
    fill_record(rec, n, m, e);

    if (opt.with_fidelities) {
      const int u_total = opt.uniform_samples > 0
                              ? opt.uniform_samples
                              : w_count * opt.samples_per_walker;
      std::vector<std::array<RatioSums, 4>> phi_side(w_count);
      std::vector<std::int8_t> sigma(n);
      for (int u = 0; u < u_total; ++u) {
        for (auto& s : sigma)
          s = uniform_rng_.uniform() < 0.5 ? std::int8_t{-1} : std::int8_t{1};
        const cplx log_psi = model_.log_amplitude(params_, sigma);
        const int group = static_cast<int>(
            static_cast<std::int64_t>(u) * w_count / u_total);
        for (int tt = 0; tt < 4; ++tt)
          phi_side[group][tt].add(log_psi - std::log(targets[tt](sigma)));
      }
      std::array<OverlapEstimate, 4> est;
      for (int tt = 0; tt < 4; ++tt) {
        std::vector<RatioSums> a(w_count), b(w_count);
        for (int w = 0; w < w_count; ++w) {
          a[w] = psi_side[w][tt];
          b[w] = phi_side[w][tt];
        }
        est[tt] = two_sided_overlap(a, b);
      }
      const int cat = est[0].value >= est[1].value ? 0 : 1;
      rec.f_ghz = est[cat].value;
      rec.f_ghz_err = est[cat].error;
      rec.f_px = est[2].value;
      rec.f_px_err = est[2].error;
      rec.f_mx = est[3].value;
      rec.f_mx_err = est[3].error;
      rec.coherence = 2.0 * rec.f_ghz - rec.f_px - rec.f_mx;
      rec.coherence_err =
          std::sqrt(4.0 * rec.f_ghz_err * rec.f_ghz_err +
                    rec.f_px_err * rec.f_px_err +
                    rec.f_mx_err * rec.f_mx_err);
      rec.extra["overlap_heavy_tail"] =
          (est[0].heavy_tail || est[1].heavy_tail || est[2].heavy_tail ||
           est[3].heavy_tail)
              ? 1.0
              : 0.0;
    }
    return rec;
  }

  // Two-sided overlap against one reference state whose configuration
  // amplitudes all share one modulus:
  //   F = E_{|Psi|^2}[Phi/Psi] * E_{|Phi|^2}[Psi/Phi]
  // with the second average over uniform configurations. Errors come from a
  // jackknife over walkers, pairing each walker with one slice of the
  // uniform-side draws.
  OverlapEstimate estimate_overlap(const TargetAmplitude& target,
                                   int samples_per_walker, int stride_sweeps,
                                   int uniform_samples) {
    const int w_count = n_walkers();
    std::vector<RatioSums> psi_side(w_count), phi_side(w_count);
    harvest(samples_per_walker, stride_sweeps,
            [&](int w, const PairProductModel::Cache& c) {
              const cplx log_psi = model_.log_amplitude(params_, c.sigma);
              psi_side[w].add(std::log(target(c.sigma)) - log_psi);
            });
    const int n = model_.n();
    std::vector<std::int8_t> sigma(n);
    for (int u = 0; u < uniform_samples; ++u) {
      for (auto& s : sigma)
        s = uniform_rng_.uniform() < 0.5 ? std::int8_t{-1} : std::int8_t{1};
      const cplx log_psi = model_.log_amplitude(params_, sigma);
      const int group = static_cast<int>(
          static_cast<std::int64_t>(u) * w_count / uniform_samples);
      phi_side[group].add(log_psi - std::log(target(sigma)));
    }
    return two_sided_overlap(psi_side, phi_side);
  }

  struct Snapshot {
    std::vector<std::vector<std::int8_t>> sigma;
    std::vector<std::array<std::uint64_t, 4>> rng_state;
    std::array<std::uint64_t, 4> uniform_rng_state{};
  };

  Snapshot snapshot() const {
    Snapshot s;
    for (const auto& c : caches_) s.sigma.push_back(c.sigma);
    for (const auto& r : rngs_) s.rng_state.push_back(r.state());
    s.uniform_rng_state = uniform_rng_.state();
    return s;
  }

  void restore(const Snapshot& s, const PairProductParams& p) {
    if (static_cast<int>(s.sigma.size()) != n_walkers() ||
        static_cast<int>(s.rng_state.size()) != n_walkers())
      throw std::invalid_argument("snapshot walker count mismatch");
    params_ = p;
    caches_.clear();
    for (int w = 0; w < n_walkers(); ++w) {
      caches_.push_back(model_.make_cache(p, s.sigma[w]));
      rngs_[w].set_state(s.rng_state[w]);
    }
    uniform_rng_.set_state(s.uniform_rng_state);
  }

 private:
  struct RatioSums {
    cplx sum{0.0, 0.0};
    double log_sum = 0.0, log_sq = 0.0;
    std::int64_t count = 0;

    void add(const cplx& log_ratio) {
      sum += std::exp(log_ratio);
      log_sum += log_ratio.real();
      log_sq += log_ratio.real() * log_ratio.real();
      ++count;
    }
  };

  static OverlapEstimate two_sided_overlap(const std::vector<RatioSums>& a,
                                           const std::vector<RatioSums>& b) {
    const int w_count = static_cast<int>(a.size());
    cplx sa(0, 0), sb(0, 0);
    double log_sum = 0.0, log_sq = 0.0;
    std::int64_t na = 0, nb = 0, nl = 0;
    for (int w = 0; w < w_count; ++w) {
      sa += a[w].sum;
      sb += b[w].sum;
      na += a[w].count;
      nb += b[w].count;
      log_sum += a[w].log_sum + b[w].log_sum;
      log_sq += a[w].log_sq + b[w].log_sq;
      nl += a[w].count + b[w].count;
    }
    OverlapEstimate out;
    if (na == 0 || nb == 0) return out;
    out.value =
        (sa / static_cast<double>(na) * (sb / static_cast<double>(nb)))
            .real();
    std::vector<double> reps;
    reps.reserve(w_count);
    for (int w = 0; w < w_count; ++w) {
      const std::int64_t ra = na - a[w].count, rb = nb - b[w].count;
      if (ra == 0 || rb == 0) continue;
      const cplx ma = (sa - a[w].sum) / static_cast<double>(ra);
      const cplx mb = (sb - b[w].sum) / static_cast<double>(rb);
      reps.push_back((ma * mb).real());
    }
    if (reps.size() >= 2) {
      const double rm = mean_of(reps);
      double acc = 0.0;
      for (const double v : reps) acc += (v - rm) * (v - rm);
      const double g = static_cast<double>(reps.size());
      out.error = std::sqrt((g - 1.0) / g * acc);
    }
    if (nl > 1) {
      const double lm = log_sum / static_cast<double>(nl);
      out.log_ratio_var =
          log_sq / static_cast<double>(nl) - lm * lm;
    }
    out.heavy_tail = out.log_ratio_var > 25.0 ||
                     !(out.error < 0.1) || !std::isfinite(out.value);
    return out;
  }

  template <typename F>
  void run_partitioned(F&& per_walker) {
    const int w_count = n_walkers();
    const int t_count = std::min(n_threads_, w_count);
    if (t_count <= 1) {
      for (int w = 0; w < w_count; ++w) per_walker(w);
      return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(t_count);
    for (int k = 0; k < t_count; ++k) {
      const int lo = k * w_count / t_count;
      const int hi = (k + 1) * w_count / t_count;
      pool.emplace_back([&, k, lo, hi] {
        try {
          for (int w = lo; w < hi; ++w) per_walker(w);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& err : errors)
      if (err) std::rethrow_exception(err);
  }

  // One sweep is N proposals: an even mix of single flips, which move the
  // magnetization, and exchanges of anti-aligned pairs, which preserve it.
  void sweep_walker(int w) {
    auto& rng = rngs_[w];
    auto& c = caches_[w];
    const int n = model_.n();
    for (int step = 0; step < n; ++step) {
      ++proposed_[w];
      if (rng.uniform() < 0.5) {
        const int i = static_cast<int>(rng.uniform_below(n));
        const cplx d = model_.flip_delta(c, i);
        if (rng.uniform() < std::exp(2.0 * d.real())) {
          model_.apply_flip(c, i);
          ++accepted_[w];
        }
      } else {
        const int i = static_cast<int>(rng.uniform_below(n));
        int j = static_cast<int>(rng.uniform_below(n - 1));
        if (j >= i) ++j;
        if (c.sigma[i] == c.sigma[j]) continue;
        const cplx d = model_.double_flip_delta(c, i, j);
        if (rng.uniform() < std::exp(2.0 * d.real())) {
          model_.apply_flip(c, i);
          model_.apply_flip(c, j);
          ++accepted_[w];
        }
      }
    }
  }

  PairProductModel model_;
  PairProductParams params_;
  std::vector<PairProductModel::Cache> caches_;
  std::vector<Xoshiro256> rngs_;
  Xoshiro256 uniform_rng_;
  std::vector<std::int64_t> accepted_, proposed_;
  int n_threads_ = 1;
};

// Deterministic replacement for the sampler: visit every configuration with
// its normalized |Psi|^2 weight. Reference path for estimator validation
// and the small-lattice integrator mode.
template <typename F>
void for_each_weighted_configuration(const PairProductModel& model,
                                     const PairProductParams& p,
                                     F&& visit) {
  model.check_params(p);
  const int n = model.n();
  if (n > 16)
    throw std::invalid_argument("full summation capped at 16 sites");
  const std::ptrdiff_t dim = std::ptrdiff_t{1} << n;
  std::vector<double> log_w(static_cast<std::size_t>(dim));
  std::vector<std::int8_t> sigma(n);
  double max_log = -kInf;
  for (std::ptrdiff_t s = 0; s < dim; ++s) {
    for (int j = 0; j < n; ++j)
      sigma[j] = (s >> j) & 1 ? std::int8_t{1} : std::int8_t{-1};
    log_w[s] = 2.0 * model.log_amplitude(p, sigma).real();
    max_log = std::max(max_log, log_w[s]);
  }
  double z = 0.0;
  for (std::ptrdiff_t s = 0; s < dim; ++s) {
    log_w[s] = std::exp(log_w[s] - max_log);
    z += log_w[s];
  }
  for (std::ptrdiff_t s = 0; s < dim; ++s) {
    const double w = log_w[s] / z;
    if (w == 0.0) continue;
    for (int j = 0; j < n; ++j)
      sigma[j] = (s >> j) & 1 ? std::int8_t{1} : std::int8_t{-1};
    visit(model.make_cache(p, sigma), w);
  }
}

inline double summed_fidelity(const PairProductModel& model,
                              const PairProductParams& p,
                              const TargetAmplitude& target) {
  const Eigen::VectorXcd dense = model.dense_amplitudes(p);
  const int n = model.n();
  std::vector<std::int8_t> sigma(n);
  cplx ov(0, 0);
  double t_norm2 = 0.0;
  for (std::ptrdiff_t s = 0; s < dense.size(); ++s) {
    for (int j = 0; j < n; ++j)
      sigma[j] = (s >> j) & 1 ? std::int8_t{1} : std::int8_t{-1};
    const cplx a = target(sigma);
    ov += std::conj(a) * dense(s);
    t_norm2 += std::norm(a);
  }
  return std::norm(ov) / t_norm2;
}

// Exact expectation values of every sampled estimator; the error fields
// stay NaN. The oracle the Monte Carlo path is tested against, and the
// deterministic mode of the variational integrator.
inline ObsRecord summed_observables(const PairProductModel& model,
                                    const PairProductParams& p,
                                    bool with_fidelities = false,
                                    double t = 0.0, double t_kac = 0.0) {
  using namespace detail;
  double m[kNumScalars] = {0.0};
  for_each_weighted_configuration(
      model, p, [&](const PairProductModel::Cache& c, double w) {
        const LocalMeasurement lm = measure_local(model, c);
        double vals[kNumScalars];
        scalar_values(lm, vals);
        for (int q = 0; q < kNumScalars; ++q) m[q] += w * vals[q];
      });
  ObsRecord rec;
  rec.t = t;
  rec.t_kac = t_kac;
  fill_record(rec, model.n(), m, nullptr);
  if (with_fidelities) {
    const int n = model.n();
    const double fp = summed_fidelity(model, p, ghz_target(n, 1));
    const double fm = summed_fidelity(model, p, ghz_target(n, -1));
    rec.f_ghz = std::max(fp, fm);
    rec.f_px = summed_fidelity(model, p, css_x_target(n));
    rec.f_mx = summed_fidelity(model, p, css_minus_x_target(n));
    rec.coherence = 2.0 * rec.f_ghz - rec.f_px - rec.f_mx;
  }
  return rec;
}

}  // namespace dipolarxx
