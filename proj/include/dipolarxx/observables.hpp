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

#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dipolarxx/util.hpp"

namespace dipolarxx {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Squeezing parameter N * Var_min(J_perp) / |<J>|^2, minimized over the
// plane orthogonal to the mean spin: project the 3x3 covariance onto that
// plane and take the smaller eigenvalue. |<J>| = 0 has no mean-spin frame;
// returns +inf.
inline double squeezing_parameter(int n, const Eigen::Vector3d& mean,
                                  const Eigen::Matrix3d& second_sym) {
  const double len = mean.norm();
  if (len < 1e-9 * n) return kInf;
  Eigen::Matrix3d cov = second_sym - mean * mean.transpose();
  Eigen::Vector3d u = mean / len;
  Eigen::Vector3d probe = std::abs(u.x()) < 0.9 ? Eigen::Vector3d::UnitX()
                                                : Eigen::Vector3d::UnitY();
  Eigen::Vector3d e1 = u.cross(probe).normalized();
  Eigen::Vector3d e2 = u.cross(e1);
  Eigen::Matrix2d v;
  v << e1.dot(cov * e1), e1.dot(cov * e2), e2.dot(cov * e1), e2.dot(cov * e2);
  const double tr = v(0, 0) + v(1, 1);
  const double s = 0.5 * (v(0, 1) + v(1, 0));
  const double disc =
      std::sqrt(std::pow(v(0, 0) - v(1, 1), 2) + 4.0 * s * s);
  const double vmin = 0.5 * (tr - disc);
  return n * vmin / (len * len);
}

// Minimal transverse variance when the mean spin points along x.
inline double min_transverse_variance_x(double var_jy, double var_jz,
                                        double jyjz_sym_centered) {
  return 0.5 * (var_jy + var_jz -
                std::sqrt(std::pow(var_jy - var_jz, 2) +
                          jyjz_sym_centered * jyjz_sym_centered));
}

// One time-stamped row of collective-spin observables. Error fields stay
// NaN for deterministic engines.
struct ObsRecord {
  double t = 0.0, t_kac = 0.0;
  double jx = kNaN, jy = kNaN, jz = kNaN;
  double var_jx = kNaN, var_jy = kNaN, var_jz = kNaN;
  double jyjz_sym = kNaN;  // <{Jy,Jz}> (uncentered)
  double jxjy_sym = kNaN, jzjx_sym = kNaN;
  double j2 = kNaN;
  double xi2 = kNaN;
  double parity = kNaN;
  double dparity = kNaN;  // d<Pz>/dtheta at theta=0, generator Jx
  double coherence = kNaN;
  double f_ghz = kNaN, f_px = kNaN, f_mx = kNaN;
  double energy = kNaN;

  double jx_err = kNaN, var_jx_err = kNaN, var_jy_err = kNaN,
         var_jz_err = kNaN, jyjz_sym_err = kNaN, j2_err = kNaN,
         xi2_err = kNaN, parity_err = kNaN, dparity_err = kNaN,
         coherence_err = kNaN, f_ghz_err = kNaN, f_px_err = kNaN,
         f_mx_err = kNaN, energy_err = kNaN;

  std::map<std::string, double> extra;  // e.g. q-cat overlaps "F_q4"
};

enum class SeriesKind { exact, sampled };

struct ObservableSeries {
  SeriesKind kind = SeriesKind::exact;
  std::vector<ObsRecord> rows;
  std::vector<std::string> extra_columns;

  static const std::vector<std::string>& base_columns() {
    static const std::vector<std::string> cols = {
        "Jx",     "VarJx",  "VarJy",          "VarJz", "JyJz_sym",
        "J2",     "xi2",    "parity",         "dparity_dtheta",
        "C",      "F_GHZ",  "F_px",           "F_mx"};
    return cols;
  }

  std::string to_csv() const;
  static ObservableSeries from_csv(const std::string& text);
};

namespace detail {

inline double* field_by_name(ObsRecord& r, const std::string& name) {
  static const std::map<std::string, double ObsRecord::*> map = {
      {"t", &ObsRecord::t},
      {"t_kac", &ObsRecord::t_kac},
      {"Jx", &ObsRecord::jx},
      {"VarJx", &ObsRecord::var_jx},
      {"VarJy", &ObsRecord::var_jy},
      {"VarJz", &ObsRecord::var_jz},
      {"JyJz_sym", &ObsRecord::jyjz_sym},
      {"J2", &ObsRecord::j2},
      {"xi2", &ObsRecord::xi2},
      {"parity", &ObsRecord::parity},
      {"dparity_dtheta", &ObsRecord::dparity},
      {"C", &ObsRecord::coherence},
      {"F_GHZ", &ObsRecord::f_ghz},
      {"F_px", &ObsRecord::f_px},
      {"F_mx", &ObsRecord::f_mx},
      {"E", &ObsRecord::energy},
      {"Jx_err", &ObsRecord::jx_err},
      {"VarJx_err", &ObsRecord::var_jx_err},
      {"VarJy_err", &ObsRecord::var_jy_err},
      {"VarJz_err", &ObsRecord::var_jz_err},
      {"JyJz_sym_err", &ObsRecord::jyjz_sym_err},
      {"J2_err", &ObsRecord::j2_err},
      {"xi2_err", &ObsRecord::xi2_err},
      {"parity_err", &ObsRecord::parity_err},
      {"dparity_dtheta_err", &ObsRecord::dparity_err},
      {"C_err", &ObsRecord::coherence_err},
      {"F_GHZ_err", &ObsRecord::f_ghz_err},
      {"F_px_err", &ObsRecord::f_px_err},
      {"F_mx_err", &ObsRecord::f_mx_err},
      {"E_err", &ObsRecord::energy_err},
  };
  auto it = map.find(name);
  if (it == map.end()) return nullptr;
  return &(r.*(it->second));
}

}  // namespace detail

inline std::string ObservableSeries::to_csv() const {
  std::ostringstream out;
  std::vector<std::string> cols = {"t", "t_kac"};
  for (const auto& c : base_columns()) {
    cols.push_back(c);
    if (kind == SeriesKind::sampled) cols.push_back(c + "_err");
  }
  if (kind == SeriesKind::sampled) {
    cols.push_back("E");
    cols.push_back("E_err");
  }
  for (const auto& c : extra_columns) {
    cols.push_back(c);
    if (kind == SeriesKind::sampled) cols.push_back(c + "_err");
  }
  for (std::size_t i = 0; i < cols.size(); ++i)
    out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& row : rows) {
    ObsRecord& r = const_cast<ObsRecord&>(row);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) out << ',';
      double* f = detail::field_by_name(r, cols[i]);
      double v;
      if (f) {
        v = *f;
      } else {
        auto it = row.extra.find(cols[i]);
        v = it == row.extra.end() ? kNaN : it->second;
      }
      out << format_double(v);
    }
    out << '\n';
  }
  return out.str();
}

inline ObservableSeries ObservableSeries::from_csv(const std::string& text) {
  ObservableSeries s;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty series CSV");
  std::vector<std::string> cols;
  {
    std::istringstream h(line);
    std::string c;
    while (std::getline(h, c, ',')) cols.push_back(c);
  }
  bool sampled = false;
  for (const auto& c : cols)
    if (c.size() > 4 && c.substr(c.size() - 4) == "_err") sampled = true;
  s.kind = sampled ? SeriesKind::sampled : SeriesKind::exact;
  ObsRecord probe;
  for (const auto& c : cols)
    if (!detail::field_by_name(probe, c) && c != "t" && c != "t_kac")
      if (c.size() <= 4 || c.substr(c.size() - 4) != "_err")
        s.extra_columns.push_back(c);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ObsRecord r;
    std::istringstream row(line);
    std::string cell;
    std::size_t idx = 0;
    while (std::getline(row, cell, ',')) {
      if (idx >= cols.size()) break;
      const double v = std::strtod(cell.c_str(), nullptr);
      double* f = detail::field_by_name(r, cols[idx]);
      if (f)
        *f = v;
      else
        r.extra[cols[idx]] = v;
      ++idx;
    }
    s.rows.push_back(std::move(r));
  }
  return s;
}

}  // namespace dipolarxx
