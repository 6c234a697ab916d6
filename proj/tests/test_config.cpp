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

#include <string>
#include <vector>

#include "dipolarxx/config.hpp"

using namespace dipolarxx;
using Catch::Matchers::ContainsSubstring;

namespace {

bool has_error(const ConfigParse& p, const std::string& needle) {
  for (const auto& e : p.errors)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("a minimal configuration fills every default") {
  const ConfigParse p = parse_run_config(R"({
    "lattice": {"geometry": "square", "L": 4, "alpha": 3.0},
    "engine": "exact"
  })");
  REQUIRE(p.ok());
  const RunConfig& c = p.config;
  CHECK(c.lattice.lx == 4);
  CHECK(c.lattice.ly == 4);
  CHECK(c.lattice.alpha == 3.0);
  CHECK(c.engine == RunEngine::exact);
  CHECK(c.t_max == 10.0);
  CHECK(c.dt_outer == 0.1);
  CHECK(c.dt_inner == 0.02);
  CHECK(c.walkers == 32);
  CHECK(c.samples_per_stage == 10000);
  CHECK(c.samples_per_record == 40000);
  CHECK(c.burn_in == -1);
  CHECK(c.stride_sweeps == 1);
  CHECK(c.epsilon == 1e-3);
  CHECK(c.epsilon0 == 1e-6);
  CHECK_FALSE(c.pseudo_inverse);
  CHECK(c.svd_cut == 1e-6);
  CHECK(c.fidelities);
  CHECK_FALSE(c.pjx_histograms);
  CHECK(c.q_targets.empty());
  CHECK(c.inertia == 0.0);
  CHECK(c.exact_cap == 20);
  CHECK(c.seed == 1);
  CHECK(c.out_dir == "run");
}

TEST_CASE("the effective configuration echo round-trips") {
  const ConfigParse p = parse_run_config(R"({
    "lattice": {"geometry": "triangular", "L": [5, 4], "alpha": 2.5},
    "engine": "tvmc",
    "schedule": {"t_max": 3.0, "dt_outer": 0.25, "dt_inner": 0.05},
    "sampler": {"walkers": 8, "samples_per_stage": 640},
    "tdvp": {"solver": "pseudo_inverse"},
    "observables": ["fidelities", "pjx"],
    "targets": {"q": [2, 4], "times": [1.5, 3.0]},
    "seed": 99,
    "out": "runs/demo"
  })");
  REQUIRE(p.ok());
  const std::string echo = p.config.to_json().dump(2);
  const ConfigParse again = parse_run_config(echo);
  REQUIRE(again.ok());
  CHECK(again.config.to_json() == p.config.to_json());
  CHECK(again.config.lattice.lx == 5);
  CHECK(again.config.lattice.ly == 4);
  CHECK(again.config.pseudo_inverse);
  CHECK(again.config.pjx_histograms);
  CHECK(again.config.q_targets == std::vector<int>{2, 4});
  CHECK(again.config.seed == 99);
}

TEST_CASE("comments and trailing text are handled like a config file") {
  const ConfigParse p = parse_run_config(R"({
    // a commented run description
    "lattice": {
      "geometry": "square",  // periodic square torus
      "L": 4,
      "alpha": 0.0           /* uniform couplings */
    },
    "engine": "dicke"
  })");
  REQUIRE(p.ok());
  CHECK(p.config.engine == RunEngine::dicke);
  CHECK(p.config.lattice.alpha == 0.0);
}

TEST_CASE("violations are collected with field paths") {
  const ConfigParse p = parse_run_config(R"({
    "lattice": {"geometry": "kagome", "L": 1, "alpha": -2.0},
    "engine": "quantum",
    "sampler": {"walkers": 0},
    "schedule": {"t_max": -1.0}
  })");
  REQUIRE_FALSE(p.ok());
  CHECK(p.errors.size() == 6);
  CHECK(has_error(p, "lattice.geometry"));
  CHECK(has_error(p, "lattice.L"));
  CHECK(has_error(p, "lattice.alpha"));
  CHECK(has_error(p, "engine"));
  CHECK(has_error(p, "sampler.walkers"));
  CHECK(has_error(p, "schedule.t_max"));
}

TEST_CASE("the exact engine size cap is enforced at parse time") {
  const ConfigParse p = parse_run_config(R"({
    "lattice": {"geometry": "square", "L": 5, "alpha": 3.0},
    "engine": "exact"
  })");
  REQUIRE_FALSE(p.ok());
  CHECK(has_error(p, "25"));
  CHECK(has_error(p, "engine"));

  // the same lattice is fine for the sampled engine
  const ConfigParse q = parse_run_config(R"({
    "lattice": {"geometry": "square", "L": 5, "alpha": 3.0},
    "engine": "tvmc"
  })");
  CHECK(q.ok());

  // 25 sites exceed the hard refusal, so no cap admits them
  const ConfigParse r = parse_run_config(R"({
    "lattice": {"geometry": "square", "L": 5, "alpha": 3.0},
    "engine": "exact",
    "exact_cap": 24
  })");
  CHECK_FALSE(r.ok());

  // a raised cap admits sizes between the default and the hard refusal
  const ConfigParse s = parse_run_config(R"({
    "lattice": {"geometry": "square", "L": [6, 4], "alpha": 3.0},
    "engine": "exact",
    "exact_cap": 24
  })");
  CHECK(s.ok());
  const ConfigParse u = parse_run_config(R"({
    "lattice": {"geometry": "square", "L": [6, 4], "alpha": 3.0},
    "engine": "exact"
  })");
  CHECK_FALSE(u.ok());
  const ConfigParse v = parse_run_config(R"({"exact_cap": 25})");
  CHECK_FALSE(v.ok());
}

TEST_CASE("unknown fields and malformed documents are rejected") {
  const ConfigParse p = parse_run_config(R"({
    "lattise": {"geometry": "square"},
    "sampler": {"walker_count": 4}
  })");
  REQUIRE_FALSE(p.ok());
  CHECK(has_error(p, "lattise: unknown field"));
  CHECK(has_error(p, "sampler.walker_count: unknown field"));

  const ConfigParse q = parse_run_config("{\"lattice\": ");
  REQUIRE_FALSE(q.ok());
  CHECK(q.errors.size() == 1);
  CHECK_THAT(q.errors[0], ContainsSubstring("config:"));

  const ConfigParse r = parse_run_config("[1, 2, 3]");
  REQUIRE_FALSE(r.ok());
  CHECK_THAT(r.errors[0], ContainsSubstring("top level"));
}

TEST_CASE("solver and observable names are validated") {
  const ConfigParse p = parse_run_config(R"({
    "tdvp": {"solver": "cholesky"},
    "observables": ["fidelities", "entropy"]
  })");
  REQUIRE_FALSE(p.ok());
  CHECK(has_error(p, "tdvp.solver"));
  CHECK(has_error(p, "entropy"));

  // an explicit empty list switches the optional estimators off
  const ConfigParse q = parse_run_config(R"({"observables": []})");
  REQUIRE(q.ok());
  CHECK_FALSE(q.config.fidelities);
  CHECK_FALSE(q.config.pjx_histograms);
}

TEST_CASE("a missing file reports one error instead of throwing") {
  const ConfigParse p = load_run_config("/nonexistent/path/to/config.json");
  REQUIRE_FALSE(p.ok());
  CHECK(p.errors.size() == 1);
}
