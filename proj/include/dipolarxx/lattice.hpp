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
#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dipolarxx/util.hpp"

namespace dipolarxx {

enum class Geometry { square, triangular };

inline std::string to_string(Geometry g) {
  return g == Geometry::square ? "square" : "triangular";
}

inline Geometry geometry_from_string(const std::string& s) {
  if (s == "square") return Geometry::square;
  if (s == "triangular") return Geometry::triangular;
  throw std::invalid_argument("unknown geometry \"" + s + "\"");
}

// Periodic planar lattice of N = Lx*Ly spin-1/2 sites. Site i sits at row
// y = i / Lx, column x = i % Lx (row-major). Primitive vectors: square
// (1,0),(0,1); triangular (1,0),(1/2,sqrt(3)/2) with unit nearest-neighbor
// distance. The periodic cell is spanned by Lx*a1 and Ly*a2.
struct LatticeSpec {
  Geometry geometry = Geometry::square;
  int lx = 4;
  int ly = 4;
  double alpha = 3.0;

  int n() const { return lx * ly; }

  std::array<double, 2> a1() const { return {1.0, 0.0}; }
  std::array<double, 2> a2() const {
    if (geometry == Geometry::square) return {0.0, 1.0};
    return {0.5, std::sqrt(3.0) / 2.0};
  }

  std::array<double, 2> position(int site) const {
    const int x = site % lx;
    const int y = site / lx;
    const auto e1 = a1();
    const auto e2 = a2();
    return {x * e1[0] + y * e2[0], x * e1[1] + y * e2[1]};
  }

  void validate() const {
    if (lx < 2 || ly < 2) throw std::invalid_argument("lattice sides must be >= 2");
    if (alpha < 0) throw std::invalid_argument("alpha must be >= 0");
  }
};

// Hamiltonian normalization constant: N in the all-to-all limit alpha=0,
// otherwise 1.
inline double hamiltonian_norm(const LatticeSpec& spec) {
  return spec.alpha == 0.0 ? static_cast<double>(spec.n()) : 1.0;
}

// Shortest displacement between sites i and j over the 3x3 block of
// periodic images (sufficient for the minimum on these near-rectangular
// tori; a 5x5 block is scanned for safety at negligible cost).
inline double min_image_distance(const LatticeSpec& spec, int i, int j) {
  if (i == j) throw std::domain_error("min_image_distance requires i != j");
  if (i < 0 || j < 0 || i >= spec.n() || j >= spec.n())
    throw std::domain_error("site index out of range");
  const auto pi = spec.position(i);
  const auto pj = spec.position(j);
  const auto e1 = spec.a1();
  const auto e2 = spec.a2();
  const double t1x = spec.lx * e1[0], t1y = spec.lx * e1[1];
  const double t2x = spec.ly * e2[0], t2y = spec.ly * e2[1];
  double best = std::numeric_limits<double>::infinity();
  for (int m1 = -2; m1 <= 2; ++m1) {
    for (int m2 = -2; m2 <= 2; ++m2) {
      const double dx = pj[0] - pi[0] + m1 * t1x + m2 * t2x;
      const double dy = pj[1] - pi[1] + m1 * t1y + m2 * t2y;
      best = std::min(best, std::hypot(dx, dy));
    }
  }
  return best;
}

// Symmetric pairwise couplings J_ij = 1/r_ij^alpha with the pairs grouped
// into displacement classes: two pairs share a class iff their lattice
// displacements (dx, dy) mod (Lx, Ly) are related by a point-group element
// compatible with the torus. Classes are the translation-symmetric
// parameter slots used by the variational ansatz.
struct CouplingTable {
  LatticeSpec spec;
  double norm = 1.0;  // Hamiltonian normalization constant
  Eigen::MatrixXd r;  // minimum-image distances, zero diagonal
  Eigen::MatrixXd j;  // couplings 1/r^alpha, zero diagonal
  Eigen::MatrixXi class_of;                    // class id per (i,j), -1 on diagonal
  int n_classes = 0;
  std::vector<std::array<int, 2>> class_disp;  // canonical (dx, dy) per class
  std::vector<double> class_r;                 // shared distance per class
  std::vector<double> class_j;                 // shared coupling per class
  std::vector<int> class_pairs;                // unordered pair count per class
  std::vector<std::vector<std::pair<int, int>>> pairs_in_class;

  int n() const { return spec.n(); }

  // Ordered pairs (i, k) containing a given site split evenly across sites
  // by translation invariance.
  int pairs_per_site(int class_id) const {
    return 2 * class_pairs[class_id] / spec.n();
  }
};

namespace detail {

// Point-group images of a torus displacement (dx, dy), reduced mod
// (Lx, Ly). Only elements that map the torus to itself are applied:
// axis reflections always; the diagonal swap only when Lx == Ly (square)
// or, for the triangular lattice, the sixfold rotation only when Lx == Ly.
inline std::vector<std::array<int, 2>> displacement_orbit(
    const LatticeSpec& spec, int dx, int dy) {
  const int lx = spec.lx, ly = spec.ly;
  auto norm = [&](int x, int y) -> std::array<int, 2> {
    x = ((x % lx) + lx) % lx;
    y = ((y % ly) + ly) % ly;
    return {x, y};
  };
  std::vector<std::array<int, 2>> seed;
  if (spec.geometry == Geometry::square) {
    seed = {{dx, dy}, {-dx, dy}, {dx, -dy}, {-dx, -dy}};
    if (lx == ly) {
      seed.push_back({dy, dx});
      seed.push_back({-dy, dx});
      seed.push_back({dy, -dx});
      seed.push_back({-dy, -dx});
    }
  } else {
    // Inversion is always a symmetry; the sixfold rotation
    // (dx,dy) -> (-dy, dx+dy) and the a1<->a2 mirror need Lx == Ly.
    seed = {{dx, dy}, {-dx, -dy}};
    if (lx == ly) {
      std::vector<std::array<int, 2>> orbit = {{dx, dy}};
      for (std::size_t head = 0; head < orbit.size(); ++head) {
        const auto [ux, uy] = orbit[head];
        const std::array<std::array<int, 2>, 3> images = {
            {{-uy, ux + uy}, {uy, ux}, {-ux, -uy}}};
        for (const auto& im : images) {
          auto c = norm(im[0], im[1]);
          bool seen = false;
          for (const auto& o : orbit)
            if (norm(o[0], o[1]) == c) { seen = true; break; }
          if (!seen) orbit.push_back({c[0], c[1]});
        }
      }
      seed = orbit;
    }
  }
  std::vector<std::array<int, 2>> out;
  for (const auto& s : seed) {
    auto c = norm(s[0], s[1]);
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  return out;
}

inline std::array<int, 2> canonical_displacement(const LatticeSpec& spec,
                                                 int dx, int dy) {
  auto orbit = displacement_orbit(spec, dx, dy);
  return *std::min_element(orbit.begin(), orbit.end());
}

}  // namespace detail

inline CouplingTable build_coupling_table(const LatticeSpec& spec) {
  spec.validate();
  const int n = spec.n();
  CouplingTable t;
  t.spec = spec;
  t.norm = hamiltonian_norm(spec);
  t.r = Eigen::MatrixXd::Zero(n, n);
  t.j = Eigen::MatrixXd::Zero(n, n);
  t.class_of = Eigen::MatrixXi::Constant(n, n, -1);

  std::map<std::array<int, 2>, int> class_ids;
  for (int i = 0; i < n; ++i) {
    const int xi = i % spec.lx, yi = i / spec.lx;
    for (int k = i + 1; k < n; ++k) {
      const int xk = k % spec.lx, yk = k / spec.lx;
      const auto key =
          detail::canonical_displacement(spec, xk - xi, yk - yi);
      auto [it, fresh] = class_ids.try_emplace(
          key, static_cast<int>(class_ids.size()));
      const int cid = it->second;
      if (fresh) {
        t.class_disp.push_back(key);
        t.class_r.push_back(0.0);
        t.class_j.push_back(0.0);
        t.class_pairs.push_back(0);
        t.pairs_in_class.emplace_back();
      }
      const double dist = min_image_distance(spec, i, k);
      const double coup = spec.alpha == 0.0 ? 1.0 : std::pow(dist, -spec.alpha);
      t.r(i, k) = t.r(k, i) = dist;
      t.j(i, k) = t.j(k, i) = coup;
      t.class_of(i, k) = t.class_of(k, i) = cid;
      t.class_r[cid] = dist;
      t.class_j[cid] = coup;
      t.class_pairs[cid] += 1;
      t.pairs_in_class[cid].push_back({i, k});
    }
  }
  t.n_classes = static_cast<int>(class_ids.size());
  return t;
}

// Mean total coupling per site, K = (1/N) sum_{i != j} J_ij.
inline double kac_factor(const CouplingTable& table) {
  return table.j.sum() / table.n();
}

inline double kac_factor(const LatticeSpec& spec, double alpha) {
  LatticeSpec s = spec;
  s.alpha = alpha;
  return kac_factor(build_coupling_table(s));
}

// Conversion between raw time t (units 1/J) and the time measured in units
// of the mean coupling per site: t_kac = t * K / norm. This collapses the
// alpha=0 and dipolar models onto a common scale.
inline double kac_time(const CouplingTable& table, double t) {
  return t * kac_factor(table) / table.norm;
}

inline std::string coupling_table_csv(const CouplingTable& t) {
  std::ostringstream out;
  out << "i,j,r_ij,J_ij,class_id\n";
  for (int i = 0; i < t.n(); ++i)
    for (int k = i + 1; k < t.n(); ++k)
      out << i << ',' << k << ',' << format_double(t.r(i, k)) << ','
          << format_double(t.j(i, k)) << ',' << t.class_of(i, k) << '\n';
  return out.str();
}

}  // namespace dipolarxx
