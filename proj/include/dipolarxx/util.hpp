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
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dipolarxx {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Random numbers.
//
// xoshiro256++ keeps its whole state in four 64-bit words, which makes
// checkpoint serialization and per-walker stream derivation trivial.
// Reference: Blackman & Vigna, "Scrambled linear pseudorandom number
// generators" (generator constants are the published ones).
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Xoshiro256 {
 public:
  Xoshiro256() : Xoshiro256(0) {}
  explicit Xoshiro256(std::uint64_t seed) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  // Independent stream for a sub-entity (walker, stage, ...). Mixing the
  // label through splitmix64 decorrelates nearby labels.
  static Xoshiro256 derived(std::uint64_t seed, std::uint64_t label) {
    std::uint64_t sm = seed ^ (0x9e3779b97f4a7c15ull * (label + 1));
    Xoshiro256 r;
    for (auto& w : r.s_) w = splitmix64(sm);
    return r;
  }

  std::uint64_t next() {
    auto rotl = [](std::uint64_t x, int k) {
      return (x << k) | (x >> (64 - k));
    };
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

// ---------------------------------------------------------------------------
// Combinatorics.
// ---------------------------------------------------------------------------

// Exact binomial coefficients; C(64,32) still fits in 64 bits.
class BinomialTable {
 public:
  explicit BinomialTable(int n_max) : n_max_(n_max), c_(n_max + 1) {
    for (int n = 0; n <= n_max; ++n) {
      c_[n].assign(n + 1, 1);
      for (int k = 1; k < n; ++k) c_[n][k] = c_[n - 1][k - 1] + c_[n - 1][k];
    }
  }
  std::uint64_t operator()(int n, int k) const {
    if (k < 0 || k > n) return 0;
    return c_[n][k];
  }
  int n_max() const { return n_max_; }

 private:
  int n_max_;
  std::vector<std::vector<std::uint64_t>> c_;
};

inline double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// ---------------------------------------------------------------------------
// Statistics for correlated samples.
// ---------------------------------------------------------------------------

// Standard error of the mean by blocking: block sizes double until fewer
// than `min_blocks` blocks remain; the reported error is the maximum over
// levels, which sits at (or above) the plateau for correlated chains.
inline double blocking_error(const std::vector<double>& x, int min_blocks = 16) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  std::vector<double> level(x);
  double err = 0.0;
  while (level.size() >= static_cast<std::size_t>(min_blocks)) {
    const std::size_t m = level.size();
    double mean = 0.0;
    for (double v : level) mean += v;
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (double v : level) var += (v - mean) * (v - mean);
    var /= static_cast<double>(m - 1);
    err = std::max(err, std::sqrt(var / static_cast<double>(m)));
    std::vector<double> next;
    next.reserve(m / 2);
    for (std::size_t i = 0; i + 1 < m; i += 2)
      next.push_back(0.5 * (level[i] + level[i + 1]));
    level.swap(next);
  }
  return err;
}

inline double mean_of(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// Mean and blocking error of per-walker chains, merged in walker order so
// the result is independent of any parallel execution schedule.
struct MeanErr {
  double value = 0.0;
  double error = 0.0;
};

inline MeanErr combine_chains(const std::vector<std::vector<double>>& chains) {
  double mean = 0.0, err2 = 0.0;
  int used = 0;
  for (const auto& c : chains) {
    if (c.empty()) continue;
    mean += mean_of(c);
    const double e = blocking_error(c);
    err2 += e * e;
    ++used;
  }
  if (used == 0) return {};
  mean /= used;
  return {mean, std::sqrt(err2) / used};
}

// ---------------------------------------------------------------------------
// Formatting and file helpers.
// ---------------------------------------------------------------------------

// Shortest representation that round-trips a double; stable across runs.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace dipolarxx
