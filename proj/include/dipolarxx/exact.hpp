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

// Sector-resolved exact state-vector engine. The Hamiltonian conserves total
// Sz, so the wavefunction is stored as one dense block per magnetization
// sector and each block is propagated independently with a Krylov
// exponential. Observables that mix sectors (transverse spin components,
// x-basis projections) are evaluated on a scatter of the blocks into the
// full 2^N vector.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dipolarxx/dicke.hpp"
#include "dipolarxx/krylov.hpp"
#include "dipolarxx/lattice.hpp"
#include "dipolarxx/observables.hpp"
#include "dipolarxx/util.hpp"

namespace dipolarxx {

constexpr int kExactDefaultSizeCap = 20;
constexpr int kExactHardSizeCap = 24;

// Basis of one fixed-magnetization sector, states ascending by value.
struct SectorBasis {
  int n = 0;
  int nup = 0;
  std::vector<std::uint32_t> states;

  void build(int n_sites, int n_up) {
    n = n_sites;
    nup = n_up;
    states.clear();
    if (nup == 0) {
      states.push_back(0);
      return;
    }
    std::uint64_t s = (std::uint64_t{1} << nup) - 1;
    const std::uint64_t limit = std::uint64_t{1} << n;
    while (s < limit) {
      states.push_back(static_cast<std::uint32_t>(s));
      const std::uint64_t c = s & (~s + 1);
      const std::uint64_t r = s + c;
      s = (((r ^ s) >> 2) / c) | r;
      if (c == 0) break;
    }
  }

  // Position of a state in `states` by combinatorial ranking; the j-th set
  // bit (1-based) at position p contributes C(p, j).
  std::ptrdiff_t rank(std::uint32_t s, const BinomialTable& binom) const {
    std::ptrdiff_t r = 0;
    int j = 0;
    std::uint32_t rest = s;
    while (rest) {
      const int p = std::countr_zero(rest);
      rest &= rest - 1;
      r += static_cast<std::ptrdiff_t>(binom(p, ++j));
      if (j > nup) throw std::logic_error("state outside sector");
    }
    return r;
  }
};

// Off-diagonal part of the Hamiltonian restricted to one sector, in CSR
// form. Matrix elements take one of a few coupling-class values, so each
// entry stores a one-byte class id and the values live in a small table.
struct SectorOperator {
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int32_t> col;
  std::vector<std::uint8_t> cls;
  std::vector<double> class_val;

  std::ptrdiff_t dim() const {
    return static_cast<std::ptrdiff_t>(row_ptr.empty() ? 0
                                                       : row_ptr.size() - 1);
  }

  void matvec(const Eigen::VectorXcd& in, Eigen::VectorXcd& out) const {
    const std::ptrdiff_t d = dim();
    out.setZero(d);
    for (std::ptrdiff_t r = 0; r < d; ++r) {
      cplx acc(0.0, 0.0);
      for (std::int64_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e)
        acc += class_val[cls[e]] * in(col[e]);
      out(r) = acc;
    }
  }
};

// Wavefunction stored per magnetization sector; blocks[k] spans the states
// with k up spins.
struct FullState {
  int n = 0;
  std::vector<Eigen::VectorXcd> blocks;

  double squared_norm() const {
    double s = 0.0;
    for (const auto& b : blocks) s += b.squaredNorm();
    return s;
  }
};

inline FullState make_full_state(int n) {
  FullState st;
  st.n = n;
  st.blocks.resize(n + 1);
  BinomialTable binom(n);
  for (int k = 0; k <= n; ++k)
    st.blocks[k] = Eigen::VectorXcd::Zero(
        static_cast<std::ptrdiff_t>(binom(n, k)));
  return st;
}

// Product state of spins along +x: uniform amplitude 2^{-N/2} over the full
// basis, hence constant within every sector.
inline FullState css_x_full(int n) {
  FullState st = make_full_state(n);
  const double amp = std::pow(2.0, -0.5 * n);
  for (auto& b : st.blocks) b.setConstant(cplx(amp, 0.0));
  return st;
}

// Spins along (cos theta, sin theta, 0): the +x state rotated about z,
// which multiplies each magnetization-M block by exp(-i theta M).
inline FullState css_azimuthal_full(int n, double theta) {
  FullState st = css_x_full(n);
  for (int k = 0; k <= n; ++k) {
    const double m = k - 0.5 * n;
    st.blocks[k] *= std::exp(cplx(0.0, -theta * m));
  }
  return st;
}

// (|+x> + i s |-x>)/sqrt(2) with s = +1 or -1.
inline FullState ghz_full(int n, int branch) {
  FullState st = css_x_full(n);
  const double amp = std::pow(2.0, -0.5 * n);
  for (int k = 0; k <= n; ++k) {
    // The -x product state differs from +x by (-1)^{#down} within a sector.
    const double sgn = ((n - k) % 2 == 0) ? 1.0 : -1.0;
    const cplx a = (cplx(amp, 0.0) + cplx(0.0, 1.0 * branch) * sgn * amp) /
                   std::sqrt(2.0);
    st.blocks[k].setConstant(a);
  }
  return st;
}

inline cplx overlap_full(const FullState& a, const FullState& b) {
  cplx s(0.0, 0.0);
  for (std::size_t k = 0; k < a.blocks.size(); ++k)
    s += a.blocks[k].dot(b.blocks[k]);
  return s;
}

struct SpectrumLine {
  int m2 = 0;        // twice the magnetization, so it stays integral
  int index = 0;     // position within the sector, ascending energy
  double energy = 0.0;
  double overlap = 0.0;  // |<state|+x product state>|^2
  double residual = 0.0;
  bool is_tos = false;
};

struct TosFit {
  double inertia = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
  double rsq = 0.0;
  int points = 0;
};

class ExactEngine {
 public:
  explicit ExactEngine(const LatticeSpec& spec,
                       int size_cap = kExactDefaultSizeCap)
      : table_(build_coupling_table(spec)), binom_(spec.n()) {
    const int n = spec.n();
    if (n > kExactHardSizeCap)
      throw std::runtime_error(
          "exact engine refuses more than 24 sites; requested " +
          std::to_string(n));
    if (n > size_cap)
      throw std::runtime_error(
          "lattice exceeds the exact-engine size cap of " +
          std::to_string(size_cap) + " sites (raise the cap to proceed)");
    bases_.resize(n + 1);
    ops_.resize(n + 1);
    for (int k = 0; k <= n; ++k) {
      bases_[k].build(n, k);
      build_sector_operator(k);
    }
  }

  const CouplingTable& couplings() const { return table_; }
  const LatticeSpec& spec() const { return table_.spec; }
  int n() const { return table_.spec.n(); }
  const SectorBasis& basis(int nup) const { return bases_[nup]; }
  const SectorOperator& sector_op(int nup) const { return ops_[nup]; }

  // e^{-i H dt} applied blockwise; per-sector Krylov tolerance `tol`.
  void step(FullState& st, double dt, double tol = 1e-8) const {
    for (int k = 0; k <= n(); ++k) {
      if (st.blocks[k].squaredNorm() == 0.0) continue;
      if (st.blocks[k].size() == 1) {
        // One-dimensional sectors carry no off-diagonal term.
        continue;
      }
      const SectorOperator& op = ops_[k];
      auto apply = [&op](const Eigen::VectorXcd& in, Eigen::VectorXcd& out) {
        op.matvec(in, out);
      };
      st.blocks[k] = krylov_expm(apply, st.blocks[k], dt, tol);
    }
    const double drift = std::abs(std::sqrt(st.squared_norm()) - 1.0);
    if (drift > 1e-8)
      throw std::runtime_error("propagation lost unitarity; norm drift " +
                               format_double(drift));
  }

  // Advance by `duration` in outer steps of at most `dt`, landing exactly.
  void evolve(FullState& st, double duration, double dt = 0.05,
              double tol = 1e-8) const {
    double remaining = duration;
    const double sgn = remaining < 0.0 ? -1.0 : 1.0;
    remaining = std::abs(remaining);
    while (remaining > 1e-12) {
      const double h = std::min(dt, remaining);
      step(st, sgn * h, tol);
      remaining -= h;
    }
  }

  double energy(const FullState& st) const {
    double e = 0.0;
    Eigen::VectorXcd tmp;
    for (int k = 0; k <= n(); ++k) {
      if (st.blocks[k].size() == 1 || st.blocks[k].squaredNorm() == 0.0)
        continue;
      ops_[k].matvec(st.blocks[k], tmp);
      e += st.blocks[k].dot(tmp).real();
    }
    return e;
  }

  Eigen::VectorXcd dense_state(const FullState& st) const {
    Eigen::VectorXcd full = Eigen::VectorXcd::Zero(std::ptrdiff_t{1} << n());
    for (int k = 0; k <= n(); ++k)
      for (std::ptrdiff_t i = 0; i < st.blocks[k].size(); ++i)
        full(bases_[k].states[i]) = st.blocks[k](i);
    return full;
  }

  // Eigenvalue distribution of the x-projection of the collective spin,
  // indexed by m + N/2. Obtained by rotating every site from the z to the
  // x basis with an in-place butterfly pass and binning by popcount.
  Eigen::VectorXd p_jx(const FullState& st) const {
    Eigen::VectorXcd full = dense_state(st);
    const std::ptrdiff_t dim = full.size();
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int site = 0; site < n(); ++site) {
      const std::ptrdiff_t bit = std::ptrdiff_t{1} << site;
      for (std::ptrdiff_t s = 0; s < dim; ++s) {
        if (s & bit) continue;
        const cplx lo = full(s);        // site down
        const cplx hi = full(s | bit);  // site up
        full(s | bit) = (hi + lo) * inv_sqrt2;  // +x component
        full(s) = (hi - lo) * inv_sqrt2;        // -x component
      }
    }
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n() + 1);
    for (std::ptrdiff_t s = 0; s < dim; ++s)
      p(std::popcount(static_cast<std::uint64_t>(s))) += std::norm(full(s));
    return p;
  }

  ObsRecord observables(const FullState& st) const {
    ObsRecord r;
    const int nn = n();
    const Eigen::VectorXcd full = dense_state(st);
    Eigen::VectorXcd jx, jy, jz;
    apply_jx(full, jx);
    apply_jy(full, jy);
    apply_jz(full, jz);

    const Eigen::Vector3d mean(full.dot(jx).real(), full.dot(jy).real(),
                               full.dot(jz).real());
    Eigen::Matrix3d sec;
    sec(0, 0) = jx.squaredNorm();
    sec(1, 1) = jy.squaredNorm();
    sec(2, 2) = jz.squaredNorm();
    sec(0, 1) = sec(1, 0) = jx.dot(jy).real();
    sec(1, 2) = sec(2, 1) = jy.dot(jz).real();
    sec(2, 0) = sec(0, 2) = jz.dot(jx).real();

    r.jx = mean(0);
    r.jy = mean(1);
    r.jz = mean(2);
    r.var_jx = sec(0, 0) - mean(0) * mean(0);
    r.var_jy = sec(1, 1) - mean(1) * mean(1);
    r.var_jz = sec(2, 2) - mean(2) * mean(2);
    r.jxjy_sym = 2.0 * sec(0, 1);
    r.jyjz_sym = 2.0 * sec(1, 2);
    r.jzjx_sym = 2.0 * sec(2, 0);
    r.j2 = sec(0, 0) + sec(1, 1) + sec(2, 2);
    r.xi2 = squeezing_parameter(nn, mean, sec);

    // z parity and its sensitivity to a rotation about x.
    Eigen::VectorXcd pz = full;
    for (std::ptrdiff_t s = 0; s < full.size(); ++s) {
      const int down = nn - std::popcount(static_cast<std::uint64_t>(s));
      if (down % 2) pz(s) = -pz(s);
    }
    r.parity = full.dot(pz).real();
    r.dparity = (cplx(0.0, 2.0) * jx.dot(pz)).real();

    // Overlaps with the +x and -x product states and the better cat branch.
    cplx ox(0.0, 0.0), omx(0.0, 0.0);
    const double amp = std::pow(2.0, -0.5 * nn);
    for (std::ptrdiff_t s = 0; s < full.size(); ++s) {
      const int down = nn - std::popcount(static_cast<std::uint64_t>(s));
      ox += full(s);
      omx += (down % 2 ? -1.0 : 1.0) * full(s);
    }
    ox *= amp;
    omx *= amp;
    r.f_px = std::norm(ox);
    r.f_mx = std::norm(omx);
    const double f_plus = 0.5 * std::norm(ox - cplx(0.0, 1.0) * omx);
    const double f_minus = 0.5 * std::norm(ox + cplx(0.0, 1.0) * omx);
    r.f_ghz = std::max(f_plus, f_minus);
    r.coherence = 2.0 * r.f_ghz - r.f_px - r.f_mx;
    r.energy = energy(st);
    return r;
  }

  // Lowest eigenpairs of every sector with their +x product-state overlaps;
  // the maximum-overlap member of each sector is marked.
  std::vector<SpectrumLine> spectrum(int k_low = 6,
                                     std::uint64_t seed = 7) const {
    std::vector<SpectrumLine> out;
    const int nn = n();
    const double css_amp2 = std::pow(2.0, -nn);
    for (int k = 0; k <= nn; ++k) {
      const std::ptrdiff_t dim = static_cast<std::ptrdiff_t>(
          bases_[k].states.size());
      const int want = static_cast<int>(
          std::min<std::ptrdiff_t>(k_low, dim));
      Eigen::VectorXd vals(want);
      std::vector<double> ovl(want, 0.0), res(want, 0.0);
      if (dim <= 1024) {
        Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(dim, dim);
        const SectorOperator& op = ops_[k];
        for (std::ptrdiff_t rr = 0; rr < dim; ++rr)
          for (std::int64_t e = op.row_ptr[rr]; e < op.row_ptr[rr + 1]; ++e)
            dense(rr, op.col[e]) += op.class_val[op.cls[e]];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
        for (int i = 0; i < want; ++i) {
          vals(i) = es.eigenvalues()(i);
          ovl[i] = css_amp2 *
                   std::norm(cplx(es.eigenvectors().col(i).sum(), 0.0));
        }
      } else {
        const SectorOperator& op = ops_[k];
        auto apply = [&op](const Eigen::VectorXcd& in,
                           Eigen::VectorXcd& out) { op.matvec(in, out); };
        EigenPairs pairs = lanczos_lowest(apply, dim, want, seed + k);
        for (int i = 0; i < want; ++i) {
          vals(i) = pairs.values(i);
          ovl[i] = css_amp2 * std::norm(pairs.vectors.col(i).sum());
          res[i] = pairs.residuals[i];
        }
      }
      int best = 0;
      for (int i = 1; i < want; ++i)
        if (ovl[i] > ovl[best]) best = i;
      for (int i = 0; i < want; ++i) {
        SpectrumLine line;
        line.m2 = 2 * k - nn;
        line.index = i;
        line.energy = vals(i);
        line.overlap = ovl[i];
        line.residual = res[i];
        line.is_tos = (i == best);
        out.push_back(line);
      }
    }
    return out;
  }

 private:
  void build_sector_operator(int k) {
    const SectorBasis& basis = bases_[k];
    const int nn = n();
    SectorOperator& op = ops_[k];
    if (table_.n_classes > 255)
      throw std::runtime_error("too many coupling classes for CSR encoding");
    op.class_val.resize(table_.n_classes);
    for (int c = 0; c < table_.n_classes; ++c)
      op.class_val[c] = -table_.class_j[c] / (2.0 * table_.norm);

    const std::ptrdiff_t dim = static_cast<std::ptrdiff_t>(
        basis.states.size());
    op.row_ptr.assign(dim + 1, 0);
    // Anti-aligned pair count is the same for every state in the sector.
    const std::int64_t per_row = std::int64_t{k} * (nn - k);
    for (std::ptrdiff_t r = 0; r < dim; ++r)
      op.row_ptr[r + 1] = op.row_ptr[r] + per_row;
    op.col.resize(op.row_ptr[dim]);
    op.cls.resize(op.row_ptr[dim]);
    for (std::ptrdiff_t r = 0; r < dim; ++r) {
      const std::uint32_t s = basis.states[r];
      std::int64_t e = op.row_ptr[r];
      for (int i = 0; i < nn; ++i) {
        const bool up_i = (s >> i) & 1u;
        for (int j = i + 1; j < nn; ++j) {
          const bool up_j = (s >> j) & 1u;
          if (up_i == up_j) continue;
          const std::uint32_t target =
              s ^ ((std::uint32_t{1} << i) | (std::uint32_t{1} << j));
          op.col[e] = static_cast<std::int32_t>(basis.rank(target, binom_));
          op.cls[e] = static_cast<std::uint8_t>(table_.class_of(i, j));
          ++e;
        }
      }
    }
  }

  void apply_jx(const Eigen::VectorXcd& in, Eigen::VectorXcd& out) const {
    const int nn = n();
    out.setZero(in.size());
    for (int i = 0; i < nn; ++i) {
      const std::ptrdiff_t bit = std::ptrdiff_t{1} << i;
      for (std::ptrdiff_t s = 0; s < in.size(); ++s)
        out(s) += 0.5 * in(s ^ bit);
    }
  }

  void apply_jy(const Eigen::VectorXcd& in, Eigen::VectorXcd& out) const {
    const int nn = n();
    out.setZero(in.size());
    for (int i = 0; i < nn; ++i) {
      const std::ptrdiff_t bit = std::ptrdiff_t{1} << i;
      for (std::ptrdiff_t s = 0; s < in.size(); ++s) {
        const double sigma = (s & bit) ? 1.0 : -1.0;
        out(s) += cplx(0.0, -0.5 * sigma) * in(s ^ bit);
      }
    }
  }

  void apply_jz(const Eigen::VectorXcd& in, Eigen::VectorXcd& out) const {
    const int nn = n();
    out.resize(in.size());
    for (std::ptrdiff_t s = 0; s < in.size(); ++s) {
      const double m =
          std::popcount(static_cast<std::uint64_t>(s)) - 0.5 * nn;
      out(s) = m * in(s);
    }
  }

  CouplingTable table_;
  BinomialTable binom_;
  std::vector<SectorBasis> bases_;
  std::vector<SectorOperator> ops_;
};

// Quadratic fit E(M) = intercept + slope M^2 over the marked tower states
// with |M| <= m_window; the rotor inertia is 1/(2 slope).
inline TosFit tos_fit(const std::vector<SpectrumLine>& lines, int n,
                      double m_window = -1.0) {
  if (m_window < 0.0) m_window = 0.5 * n - 1.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  int cnt = 0;
  for (const auto& l : lines) {
    if (!l.is_tos) continue;
    const double m = 0.5 * l.m2;
    if (std::abs(m) > m_window + 1e-9) continue;
    const double x = m * m;
    sx += x;
    sy += l.energy;
    sxx += x * x;
    sxy += x * l.energy;
    syy += l.energy * l.energy;
    ++cnt;
  }
  if (cnt < 3) throw std::runtime_error("tower fit needs at least 3 sectors");
  const double denom = cnt * sxx - sx * sx;
  if (std::abs(denom) < 1e-300)
    throw std::runtime_error("tower fit is degenerate");
  TosFit fit;
  fit.points = cnt;
  fit.slope = (cnt * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / cnt;
  if (fit.slope <= 0.0)
    throw std::runtime_error("tower fit produced a non-positive curvature");
  fit.inertia = 1.0 / (2.0 * fit.slope);
  const double ss_tot = syy - sy * sy / cnt;
  double ss_res = 0.0;
  for (const auto& l : lines) {
    if (!l.is_tos) continue;
    const double m = 0.5 * l.m2;
    if (std::abs(m) > m_window + 1e-9) continue;
    const double pred = fit.intercept + fit.slope * m * m;
    ss_res += (l.energy - pred) * (l.energy - pred);
  }
  fit.rsq = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

inline std::string spectrum_csv(const std::vector<SpectrumLine>& lines) {
  std::string out = "M,n,E,overlap,is_tos\n";
  for (const auto& l : lines) {
    const double m = 0.5 * l.m2;
    out += format_double(m);
    out += ',';
    out += std::to_string(l.index);
    out += ',';
    out += format_double(l.energy);
    out += ',';
    out += format_double(l.overlap);
    out += ',';
    out += l.is_tos ? '1' : '0';
    out += '\n';
  }
  return out;
}

// Binary checkpoint: magic, lattice identity, time, sector blocks.
inline void save_exact_checkpoint(const std::string& path,
                                  const LatticeSpec& spec, double t,
                                  const FullState& st) {
  std::string buf;
  buf.reserve(64 + (std::size_t{1} << spec.n()) * 16);
  const char magic[8] = {'D', 'X', 'X', 'C', 'K', 'P', 'T', '1'};
  buf.append(magic, 8);
  auto put = [&buf](const void* p, std::size_t sz) {
    buf.append(static_cast<const char*>(p), sz);
  };
  const std::int32_t n = spec.n();
  const std::int32_t geom = spec.geometry == Geometry::square ? 0 : 1;
  const std::int32_t lx = spec.lx, ly = spec.ly;
  put(&n, 4);
  put(&geom, 4);
  put(&lx, 4);
  put(&ly, 4);
  put(&spec.alpha, 8);
  put(&t, 8);
  for (const auto& b : st.blocks) {
    const std::int64_t dim = b.size();
    put(&dim, 8);
    put(b.data(), static_cast<std::size_t>(dim) * sizeof(cplx));
  }
  atomic_write_file(path, buf);
}

struct ExactCheckpoint {
  LatticeSpec spec;
  double t = 0.0;
  FullState state;
};

inline ExactCheckpoint load_exact_checkpoint(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 40 || buf.compare(0, 8, "DXXCKPT1") != 0)
    throw std::runtime_error("not a valid checkpoint file: " + path);
  std::size_t off = 8;
  auto get = [&buf, &off, &path](void* p, std::size_t sz) {
    if (off + sz > buf.size())
      throw std::runtime_error("truncated checkpoint file: " + path);
    std::memcpy(p, buf.data() + off, sz);
    off += sz;
  };
  std::int32_t n = 0, geom = 0, lx = 0, ly = 0;
  get(&n, 4);
  get(&geom, 4);
  get(&lx, 4);
  get(&ly, 4);
  ExactCheckpoint ck;
  ck.spec.geometry = geom == 0 ? Geometry::square : Geometry::triangular;
  ck.spec.lx = lx;
  ck.spec.ly = ly;
  get(&ck.spec.alpha, 8);
  get(&ck.t, 8);
  if (n != ck.spec.n())
    throw std::runtime_error("checkpoint header is inconsistent: " + path);
  ck.state = make_full_state(n);
  for (int k = 0; k <= n; ++k) {
    std::int64_t dim = 0;
    get(&dim, 8);
    if (dim != ck.state.blocks[k].size())
      throw std::runtime_error("checkpoint block size mismatch: " + path);
    get(ck.state.blocks[k].data(),
        static_cast<std::size_t>(dim) * sizeof(cplx));
  }
  return ck;
}

}  // namespace dipolarxx
