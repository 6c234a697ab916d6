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

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dipolarxx/lattice.hpp"
#include "dipolarxx/util.hpp"

namespace dipolarxx {

enum class RunEngine { exact, tvmc, dicke };

inline std::string engine_name(RunEngine e) {
  switch (e) {
    case RunEngine::exact: return "exact";
    case RunEngine::tvmc: return "tvmc";
    default: return "dicke";
  }
}

// One run description, parsed from a commented-JSON file. Every field has
// a default; the effective values are echoed into run metadata so a run
// can be re-derived from its own output directory.
//
// Schema (defaults in parentheses):
//   lattice:  geometry "square"|"triangular" ("square"),
//             L int or [lx, ly] (4), alpha >= 0 (3.0)
//   engine:   "exact" | "tvmc" | "dicke" ("exact")
//   schedule: t_max > 0 (10.0), dt_outer > 0 (0.1), dt_inner > 0 (0.02)
//   sampler:  walkers >= 1 (32), samples_per_stage >= 1 (10000, total
//             across walkers), samples_per_record >= 1 (40000, total),
//             burn_in >= -1 (-1 = automatic), stride_sweeps >= 1 (1)
//   tdvp:     epsilon >= 0 (1e-3), epsilon0 >= 0 (1e-6),
//             solver "regularized"|"pseudo_inverse" ("regularized"),
//             svd_cut > 0 (1e-6)
//   observables: subset of ["fidelities", "pjx"] (["fidelities"])
//   targets:  q: [int >= 1] ([]), times: [real >= 0] ([])
//   inertia:  > 0 or 0 = derive from the model (0)
//   exact_cap: 1..24 (20), the exact-engine refusal threshold
//   seed:     unsigned (1)
//   out:      run directory ("run")
struct RunConfig {
  LatticeSpec lattice;
  RunEngine engine = RunEngine::exact;
  double t_max = 10.0;
  double dt_outer = 0.1;
  double dt_inner = 0.02;
  int walkers = 32;
  int samples_per_stage = 10000;
  int samples_per_record = 40000;
  int burn_in = -1;
  int stride_sweeps = 1;
  double epsilon = 1e-3;
  double epsilon0 = 1e-6;
  bool pseudo_inverse = false;
  double svd_cut = 1e-6;
  bool fidelities = true;
  bool pjx_histograms = false;
  std::vector<int> q_targets;
  std::vector<double> target_times;
  double inertia = 0.0;
  int exact_cap = 20;
  std::uint64_t seed = 1;
  std::string out_dir = "run";

  // Effective (post-default) configuration; parsing the dump of this echo
  // reproduces the same RunConfig.
  nlohmann::json to_json() const {
    nlohmann::json j;
    j["lattice"]["geometry"] =
        lattice.geometry == Geometry::square ? "square" : "triangular";
    j["lattice"]["L"] = {lattice.lx, lattice.ly};
    j["lattice"]["alpha"] = lattice.alpha;
    j["engine"] = engine_name(engine);
    j["schedule"]["t_max"] = t_max;
    j["schedule"]["dt_outer"] = dt_outer;
    j["schedule"]["dt_inner"] = dt_inner;
    j["sampler"]["walkers"] = walkers;
    j["sampler"]["samples_per_stage"] = samples_per_stage;
    j["sampler"]["samples_per_record"] = samples_per_record;
    j["sampler"]["burn_in"] = burn_in;
    j["sampler"]["stride_sweeps"] = stride_sweeps;
    j["tdvp"]["epsilon"] = epsilon;
    j["tdvp"]["epsilon0"] = epsilon0;
    j["tdvp"]["solver"] = pseudo_inverse ? "pseudo_inverse" : "regularized";
    j["tdvp"]["svd_cut"] = svd_cut;
    nlohmann::json obs = nlohmann::json::array();
    if (fidelities) obs.push_back("fidelities");
    if (pjx_histograms) obs.push_back("pjx");
    j["observables"] = obs;
    j["targets"]["q"] = q_targets;
    j["targets"]["times"] = target_times;
    j["inertia"] = inertia;
    j["exact_cap"] = exact_cap;
    j["seed"] = seed;
    j["out"] = out_dir;
    return j;
  }
};

struct ConfigParse {
  RunConfig config;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

namespace detail {

// Field-path-tagged extraction helpers. Each one leaves the default in
// place and records an error when the value is unusable.
class ConfigReader {
 public:
  explicit ConfigReader(std::vector<std::string>& errors) : errors_(errors) {}

  void fail(const std::string& path, const std::string& what) {
    errors_.push_back(path + ": " + what);
  }

  void check_keys(const nlohmann::json& j, const std::string& path,
                  std::initializer_list<const char*> allowed) {
    if (!j.is_object()) return;
    for (const auto& item : j.items()) {
      bool known = false;
      for (const char* k : allowed)
        if (item.key() == k) {
          known = true;
          break;
        }
      if (!known)
        fail(path.empty() ? item.key() : path + "." + item.key(),
             "unknown field");
    }
  }

  const nlohmann::json* section(const nlohmann::json& j,
                                const std::string& key) {
    if (!j.contains(key)) return nullptr;
    if (!j[key].is_object()) {
      fail(key, "must be an object");
      return nullptr;
    }
    return &j[key];
  }

  void read_int(const nlohmann::json& j, const std::string& key,
                const std::string& path, int min_value, int& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer()) {
      fail(path, "must be an integer");
      return;
    }
    const std::int64_t v = j[key].get<std::int64_t>();
    if (v < min_value) {
      fail(path, "must be >= " + std::to_string(min_value));
      return;
    }
    out = static_cast<int>(v);
  }

  void read_double(const nlohmann::json& j, const std::string& key,
                   const std::string& path, double min_value, bool strict,
                   double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) {
      fail(path, "must be a number");
      return;
    }
    const double v = j[key].get<double>();
    if (strict ? !(v > min_value) : !(v >= min_value)) {
      fail(path, std::string("must be ") + (strict ? "> " : ">= ") +
                     format_double(min_value));
      return;
    }
    out = v;
  }

  bool read_string(const nlohmann::json& j, const std::string& key,
                   const std::string& path, std::string& out) {
    if (!j.contains(key)) return false;
    if (!j[key].is_string()) {
      fail(path, "must be a string");
      return false;
    }
    out = j[key].get<std::string>();
    return true;
  }

 private:
  std::vector<std::string>& errors_;
};

}  // namespace detail

inline ConfigParse parse_run_config(const std::string& text) {
  ConfigParse out;
  nlohmann::json root;
  try {
    // allow_exceptions = true, ignore_comments = true
    root = nlohmann::json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    out.errors.push_back(std::string("config: ") + e.what());
    return out;
  }
  if (!root.is_object()) {
    out.errors.push_back("config: top level must be an object");
    return out;
  }

  RunConfig& c = out.config;
  detail::ConfigReader r(out.errors);
  r.check_keys(root, "",
               {"lattice", "engine", "schedule", "sampler", "tdvp",
                "observables", "targets", "inertia", "exact_cap", "seed",
                "out"});

  if (const nlohmann::json* lat = r.section(root, "lattice")) {
    r.check_keys(*lat, "lattice", {"geometry", "L", "alpha"});
    std::string geom;
    if (r.read_string(*lat, "geometry", "lattice.geometry", geom)) {
      try {
        c.lattice.geometry = geometry_from_string(geom);
      } catch (const std::invalid_argument& e) {
        r.fail("lattice.geometry", e.what());
      }
    }
    if (lat->contains("L")) {
      const nlohmann::json& l = (*lat)["L"];
      if (l.is_number_integer()) {
        const int side = l.get<int>();
        if (side < 2)
          r.fail("lattice.L", "sides must be >= 2");
        else
          c.lattice.lx = c.lattice.ly = side;
      } else if (l.is_array() && l.size() == 2 && l[0].is_number_integer() &&
                 l[1].is_number_integer()) {
        const int lx = l[0].get<int>(), ly = l[1].get<int>();
        if (lx < 2 || ly < 2)
          r.fail("lattice.L", "sides must be >= 2");
        else {
          c.lattice.lx = lx;
          c.lattice.ly = ly;
        }
      } else {
        r.fail("lattice.L", "must be an integer or a pair [lx, ly]");
      }
    }
    r.read_double(*lat, "alpha", "lattice.alpha", 0.0, false,
                  c.lattice.alpha);
  }

  std::string engine;
  if (r.read_string(root, "engine", "engine", engine)) {
    if (engine == "exact")
      c.engine = RunEngine::exact;
    else if (engine == "tvmc")
      c.engine = RunEngine::tvmc;
    else if (engine == "dicke")
      c.engine = RunEngine::dicke;
    else
      r.fail("engine", "must be one of exact, tvmc, dicke");
  }

  if (const nlohmann::json* sch = r.section(root, "schedule")) {
    r.check_keys(*sch, "schedule", {"t_max", "dt_outer", "dt_inner"});
    r.read_double(*sch, "t_max", "schedule.t_max", 0.0, true, c.t_max);
    r.read_double(*sch, "dt_outer", "schedule.dt_outer", 0.0, true,
                  c.dt_outer);
    r.read_double(*sch, "dt_inner", "schedule.dt_inner", 0.0, true,
                  c.dt_inner);
  }

  if (const nlohmann::json* smp = r.section(root, "sampler")) {
    r.check_keys(*smp, "sampler",
                 {"walkers", "samples_per_stage", "samples_per_record",
                  "burn_in", "stride_sweeps"});
    r.read_int(*smp, "walkers", "sampler.walkers", 1, c.walkers);
    r.read_int(*smp, "samples_per_stage", "sampler.samples_per_stage", 1,
               c.samples_per_stage);
    r.read_int(*smp, "samples_per_record", "sampler.samples_per_record", 1,
               c.samples_per_record);
    r.read_int(*smp, "burn_in", "sampler.burn_in", -1, c.burn_in);
    r.read_int(*smp, "stride_sweeps", "sampler.stride_sweeps", 1,
               c.stride_sweeps);
  }

  if (const nlohmann::json* td = r.section(root, "tdvp")) {
    r.check_keys(*td, "tdvp", {"epsilon", "epsilon0", "solver", "svd_cut"});
    r.read_double(*td, "epsilon", "tdvp.epsilon", 0.0, false, c.epsilon);
    r.read_double(*td, "epsilon0", "tdvp.epsilon0", 0.0, false, c.epsilon0);
    std::string solver;
    if (r.read_string(*td, "solver", "tdvp.solver", solver)) {
      if (solver == "regularized")
        c.pseudo_inverse = false;
      else if (solver == "pseudo_inverse")
        c.pseudo_inverse = true;
      else
        r.fail("tdvp.solver", "must be regularized or pseudo_inverse");
    }
    r.read_double(*td, "svd_cut", "tdvp.svd_cut", 0.0, true, c.svd_cut);
  }

  if (root.contains("observables")) {
    const nlohmann::json& obs = root["observables"];
    if (!obs.is_array()) {
      r.fail("observables", "must be an array of names");
    } else {
      c.fidelities = false;
      c.pjx_histograms = false;
      for (const auto& item : obs) {
        if (!item.is_string()) {
          r.fail("observables", "entries must be strings");
          continue;
        }
        const std::string name = item.get<std::string>();
        if (name == "fidelities")
          c.fidelities = true;
        else if (name == "pjx")
          c.pjx_histograms = true;
        else
          r.fail("observables", "unknown observable \"" + name + "\"");
      }
    }
  }

  if (const nlohmann::json* tgt = r.section(root, "targets")) {
    r.check_keys(*tgt, "targets", {"q", "times"});
    if (tgt->contains("q")) {
      if (!(*tgt)["q"].is_array()) {
        r.fail("targets.q", "must be an array of integers");
      } else {
        for (const auto& item : (*tgt)["q"]) {
          if (!item.is_number_integer() || item.get<int>() < 1) {
            r.fail("targets.q", "entries must be integers >= 1");
            break;
          }
          c.q_targets.push_back(item.get<int>());
        }
      }
    }
    if (tgt->contains("times")) {
      if (!(*tgt)["times"].is_array()) {
        r.fail("targets.times", "must be an array of times");
      } else {
        for (const auto& item : (*tgt)["times"]) {
          if (!item.is_number() || item.get<double>() < 0.0) {
            r.fail("targets.times", "entries must be times >= 0");
            break;
          }
          c.target_times.push_back(item.get<double>());
        }
      }
    }
  }

  r.read_double(root, "inertia", "inertia", 0.0, false, c.inertia);
  r.read_int(root, "exact_cap", "exact_cap", 1, c.exact_cap);
  if (c.exact_cap > 24) r.fail("exact_cap", "must be <= 24");

  if (root.contains("seed")) {
    const nlohmann::json& s = root["seed"];
    if (s.is_number_unsigned())
      c.seed = s.get<std::uint64_t>();
    else if (s.is_number_integer() && s.get<std::int64_t>() >= 0)
      c.seed = static_cast<std::uint64_t>(s.get<std::int64_t>());
    else
      r.fail("seed", "must be a non-negative integer");
  }
  r.read_string(root, "out", "out", c.out_dir);

  // cross-field rule; the hard engine refusal sits at 24 sites
  if (c.engine == RunEngine::exact && c.lattice.n() > c.exact_cap)
    r.fail("engine", "exact engine caps at " + std::to_string(c.exact_cap) +
                         " sites (raise exact_cap up to 24); lattice has " +
                         std::to_string(c.lattice.n()));

  return out;
}

inline ConfigParse load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    ConfigParse out;
    out.errors.push_back(std::string("config: ") + e.what());
    return out;
  }
  return parse_run_config(text);
}

}  // namespace dipolarxx
