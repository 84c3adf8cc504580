// Copyright 2026 The evadmm Authors
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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "evadmm/io.hpp"

namespace evadmm {
namespace {

namespace fs = std::filesystem;

std::string demand_csv(int T, double kw = 50.0) {
  std::string s = "step,kw\n";
  for (int t = 0; t < T; ++t) s += std::to_string(t) + "," + std::to_string(kw + t % 7) + "\n";
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("evadmm_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void expect_same(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double tol,
                 const std::string& what) {
  ASSERT_EQ(a.size(), b.size()) << what;
  if (a.size()) EXPECT_LE((a - b).cwiseAbs().maxCoeff(), tol) << what;
}

TEST(LoadScenario, EventRowDefinesWindowAndTarget) {
  const LoadedScenario ls = parse_scenario(
      demand_csv(96), "ev_id,arrival_step,departure_step,required_kwh\n7,32,60,14.0\n", "", "");
  const Scenario& s = ls.scenario;
  EXPECT_EQ(s.grid.steps, 96);
  EXPECT_EQ(s.grid.steps_per_hour, 4);
  ASSERT_EQ(s.evs.size(), 1u);
  const EvSpec& ev = s.evs[0];
  EXPECT_EQ(ev.id, 7);
  for (int t = 0; t < 96; ++t) EXPECT_EQ(ev.availability[t], t >= 32 && t < 60 ? 1.0 : 0.0);
  EXPECT_DOUBLE_EQ(ev.required_energy, ev.initial_energy + 14.0);
  EXPECT_DOUBLE_EQ(ev.initial_energy, default_scenario_params().ev.initial_energy);

  const Tariff def = default_tariff(s.grid);
  expect_same(s.tariff.price_ch, def.price_ch, 0.0, "price_ch");
  expect_same(s.tariff.price_dis, def.price_dis, 0.0, "price_dis");
  EXPECT_EQ(ls.config.rho, default_rho(AggregatorObjective::kLoadVariance));
}

TEST(LoadScenario, OverrideColumnsAndConfigKeys) {
  const LoadedScenario ls = parse_scenario(
      demand_csv(8),
      "# fleet\nev_id,arrival_step,departure_step,required_kwh,p_ch_max,alpha\n"
      "1,0,8,2.0,6.5,0.02\n",
      "", "objective = ccm\nrho = 0.5\nv2g = on\nmodel = relaxed\nsteps_per_hour = 2\n");
  const Scenario& s = ls.scenario;
  EXPECT_EQ(s.aggregator.objective, AggregatorObjective::kChargingCost);
  EXPECT_EQ(s.grid.steps_per_hour, 2);
  EXPECT_EQ(s.evs[0].p_ch_max[3], 6.5);
  EXPECT_EQ(s.evs[0].alpha, 0.02);
  EXPECT_EQ(ls.config.rho, 0.5);
  EXPECT_TRUE(ls.config.v2g_enabled);
  EXPECT_EQ(ls.config.constraint_model, ConstraintModel::kRelaxed);
}

TEST(LoadScenario, StepCountMismatchIsAParseError) {
  std::string tariff = "step,price_ch,price_dis\n";
  for (int t = 0; t < 95; ++t) tariff += std::to_string(t) + ",0.2,0.1\n";
  EXPECT_THROW(parse_scenario(demand_csv(96),
                              "ev_id,arrival_step,departure_step,required_kwh\n", tariff, ""),
               ParseError);
}

TEST(LoadScenario, ParseErrorsCarryLineNumbers) {
  const std::string events = "ev_id,arrival_step,departure_step,required_kwh\n";
  try {
    parse_scenario("step,kw\n# base load\n0,1.0\n1,abc\n", events, "", "");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
    EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos) << e.what();
  }
  try {
    parse_scenario(demand_csv(8), events + "1,0,8,1.0\n2,5,3,1.0\n", "", "");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  try {
    parse_scenario(demand_csv(8), events, "", "rho = 1\nbogus = 2\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
  }
  EXPECT_THROW(parse_scenario(demand_csv(8), "ev_id,arrival_step\n", "", ""), ParseError);
  EXPECT_THROW(parse_scenario(demand_csv(8), events + "1,0,8,1.0\n1,0,8,1.0\n", "", ""),
               ParseError);
  EXPECT_THROW(parse_scenario("step,kw\n0,1\n2,1\n", events, "", ""), ParseError);
}

TEST(LoadScenario, ValidationViolationsAreReported) {
  // Target above the battery capacity.
  EXPECT_THROW(parse_scenario(demand_csv(8),
                              "ev_id,arrival_step,departure_step,required_kwh\n1,0,8,100\n", "",
                              ""),
               ValidationError);
}

TEST(LoadScenario, ReadsFilesFromDisk) {
  TempDir dir("load");
  const Scenario s = synth_scenario(3, 12, 4, 5);
  write_scenario(s, default_admm_config(s.aggregator.objective, s.grid), dir.path.string());
  const LoadedScenario ls =
      load_scenario((dir.path / "demand.csv").string(), (dir.path / "events.csv").string(),
                    (dir.path / "tariff.csv").string(), (dir.path / "config.txt").string());
  EXPECT_EQ(ls.scenario.evs.size(), 3u);
  EXPECT_THROW(load_scenario((dir.path / "missing.csv").string(),
                             (dir.path / "events.csv").string()),
               ParseError);
}

TEST(Serialize, RoundTripPreservesTheScenario) {
  for (AggregatorObjective obj :
       {AggregatorObjective::kLoadVariance, AggregatorObjective::kChargingCost}) {
    const Scenario s = synth_scenario(6, 48, 2, 99, obj);
    AdmmConfig cfg = default_admm_config(obj, s.grid);
    cfg.gamma = 2.5;
    cfg.v2g_enabled = true;
    cfg.update_mode = UpdateMode::kJacobi;
    const ScenarioText text = serialize(s, cfg);
    const LoadedScenario back =
        parse_scenario(text.demand_csv, text.events_csv, text.tariff_csv, text.config_text);
    const Scenario& b = back.scenario;
    EXPECT_EQ(b.grid.steps, s.grid.steps);
    EXPECT_EQ(b.grid.steps_per_hour, s.grid.steps_per_hour);
    EXPECT_EQ(b.aggregator.objective, obj);
    expect_same(b.demand, s.demand, 1e-12, "demand");
    expect_same(b.tariff.price_ch, s.tariff.price_ch, 1e-12, "price_ch");
    expect_same(b.tariff.price_dis, s.tariff.price_dis, 1e-12, "price_dis");
    expect_same(b.aggregator.p_ch_max, s.aggregator.p_ch_max, 1e-12, "agg p_ch_max");
    expect_same(b.aggregator.p_dis_max, s.aggregator.p_dis_max, 1e-12, "agg p_dis_max");
    EXPECT_NEAR(b.aggregator.delta, s.aggregator.delta, 1e-12);
    ASSERT_EQ(b.evs.size(), s.evs.size());
    for (size_t i = 0; i < s.evs.size(); ++i) {
      const EvSpec &x = s.evs[i], &y = b.evs[i];
      EXPECT_EQ(x.id, y.id);
      expect_same(y.availability, x.availability, 0.0, "availability");
      EXPECT_NEAR(y.required_energy, x.required_energy, 1e-12);
      EXPECT_NEAR(y.initial_energy, x.initial_energy, 1e-12);
      expect_same(y.energy_min, x.energy_min, 1e-12, "energy_min");
      expect_same(y.energy_max, x.energy_max, 1e-12, "energy_max");
      expect_same(y.p_ch_max, x.p_ch_max, 1e-12, "p_ch_max");
      expect_same(y.p_dis_max, x.p_dis_max, 1e-12, "p_dis_max");
      EXPECT_NEAR(y.eta_ch, x.eta_ch, 1e-12);
      EXPECT_NEAR(y.eta_dis, x.eta_dis, 1e-12);
      EXPECT_NEAR(y.alpha, x.alpha, 1e-12);
    }
    const AdmmConfig& c = back.config;
    EXPECT_EQ(c.rho, cfg.rho);
    EXPECT_EQ(c.gamma, cfg.gamma);
    EXPECT_EQ(c.eps_p, cfg.eps_p);
    EXPECT_EQ(c.eps_d, cfg.eps_d);
    EXPECT_EQ(c.max_iter, cfg.max_iter);
    EXPECT_EQ(c.update_mode, cfg.update_mode);
    EXPECT_EQ(c.v2g_enabled, cfg.v2g_enabled);
    EXPECT_EQ(c.constraint_model, cfg.constraint_model);
    // A second pass reproduces the text exactly.
    const ScenarioText again = serialize(b, c);
    EXPECT_EQ(again.demand_csv, text.demand_csv);
    EXPECT_EQ(again.events_csv, text.events_csv);
    EXPECT_EQ(again.tariff_csv, text.tariff_csv);
    EXPECT_EQ(again.config_text, text.config_text);
  }
}

TEST(SynthScenario, DeterministicAndFeasible) {
  const AdmmConfig cfg = default_admm_config(AggregatorObjective::kLoadVariance, TimeGrid{});
  const ScenarioText a = serialize(synth_scenario(36, 96, 4, 7), cfg);
  const ScenarioText b = serialize(synth_scenario(36, 96, 4, 7), cfg);
  EXPECT_EQ(a.demand_csv, b.demand_csv);
  EXPECT_EQ(a.events_csv, b.events_csv);
  EXPECT_EQ(a.tariff_csv, b.tariff_csv);
  EXPECT_NE(serialize(synth_scenario(36, 96, 4, 8), cfg).events_csv, a.events_csv);

  const Scenario s = synth_scenario(36, 96, 4, 7);
  EXPECT_EQ(s.evs.size(), 36u);
  EXPECT_TRUE(validate(s).empty());
  for (const auto& ev : s.evs) {
    EXPECT_GE(ev.availability.sum(), 8.0);
    for (bool v2g : {false, true}) {
      EXPECT_TRUE(feasibility_check(ev, s.grid, v2g).feasible) << "EV " << ev.id;
    }
  }
}

TEST(Manifest, ParsesKeysAndResolvesPaths) {
  const RunManifest m = parse_manifest(
      "# experiment\ndemand = data/demand.csv\nevents = /abs/events.csv\n"
      "objectives = lvm, ccm\ngammas = 0, 10\nv2g = off,on\nmodels = full,relaxed\n"
      "seed = 42\nout_dir = out\n",
      "/base");
  EXPECT_EQ(fs::path(m.demand_path), fs::path("/base/data/demand.csv"));
  EXPECT_EQ(m.events_path, "/abs/events.csv");
  EXPECT_EQ(m.objectives.size(), 2u);
  EXPECT_EQ(m.gammas, (std::vector<double>{0.0, 10.0}));
  EXPECT_EQ(m.v2g, (std::vector<bool>{false, true}));
  EXPECT_EQ(m.models.size(), 2u);
  EXPECT_EQ(m.seed, 42u);
  EXPECT_THROW(parse_manifest("synthetic = true\nunknown = 1\n"), ParseError);
  EXPECT_THROW(parse_manifest("gammas = 1\n"), ParseError);
  EXPECT_THROW(parse_manifest("synthetic = true\ngammas = -1\n"), ParseError);
}

RunManifest tiny_manifest(const fs::path& out) {
  RunManifest m;
  m.synthetic = true;
  m.synth_evs = 2;
  m.synth_steps = 8;
  m.synth_steps_per_hour = 2;
  m.seed = 3;
  m.objectives = {AggregatorObjective::kLoadVariance, AggregatorObjective::kChargingCost};
  m.gammas = {0.0, 10.0};
  m.v2g = {false, true};
  m.out_dir = out.string();
  return m;
}

TEST(RunExperiment, WritesTheFullMatrixDeterministically) {
  TempDir dir("experiment");
  const ExperimentResult r1 = run_experiment(tiny_manifest(dir.path / "a"));
  const ExperimentResult r2 = run_experiment(tiny_manifest(dir.path / "b"));
  EXPECT_EQ(r1.exit_code, kExitOk);
  EXPECT_EQ(r1.cells.size(), 8u);
  const std::string json = read_file(dir.path / "a" / "results.json");
  EXPECT_EQ(json, read_file(dir.path / "b" / "results.json"));
  for (const char* key : {"\"residuals\"", "\"converged\"", "\"load_variance\"",
                          "\"charging_cost\"", "\"degradation_cost\"", "\"peak_kw\""}) {
    EXPECT_NE(json.find(key), std::string::npos) << key;
  }
  const fs::path cell = dir.path / "a" / "cells" / r1.cells[0].name;
  const std::string profile = read_file(cell / "profile.csv");
  EXPECT_EQ(profile.substr(0, profile.find('\n')), "step,base_kw,ev_kw,total_kw");
  EXPECT_TRUE(fs::exists(cell / "residuals.csv"));
  EXPECT_TRUE(fs::exists(cell / "schedules.csv"));
  EXPECT_TRUE(fs::exists(dir.path / "a" / "runtime.csv"));
  EXPECT_EQ(results_json(r1.cells, 3), results_json(r2.cells, 3));
}

TEST(RunExperiment, FailedCellsSetTheExitCode) {
  TempDir dir("exit");
  std::ofstream(dir.path / "demand.csv") << demand_csv(8);
  // Two available steps cannot deliver 10 kWh at 8 kW.
  std::ofstream(dir.path / "events.csv")
      << "ev_id,arrival_step,departure_step,required_kwh\n1,0,2,10\n";
  std::ofstream(dir.path / "manifest.txt")
      << "demand = demand.csv\nevents = events.csv\nout_dir = " << (dir.path / "out").string()
      << "\n";
  const ExperimentResult r = run_experiment(load_manifest((dir.path / "manifest.txt").string()));
  EXPECT_EQ(r.exit_code, kExitInfeasible);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_FALSE(r.cells[0].error.empty());
  EXPECT_TRUE(fs::exists(dir.path / "out" / "results.json"));

  RunManifest m = tiny_manifest(dir.path / "short");
  m.objectives = {AggregatorObjective::kLoadVariance};
  m.gammas = {1.0};
  m.v2g = {false};
  m.config_path = (dir.path / "config.txt").string();
  std::ofstream(m.config_path) << "max_iter = 2\n";
  m.synthetic = false;
  m.demand_path = (dir.path / "demand.csv").string();
  m.events_path = (dir.path / "events_ok.csv").string();
  std::ofstream(m.events_path) << "ev_id,arrival_step,departure_step,required_kwh\n1,0,8,3\n";
  EXPECT_EQ(run_experiment(m).exit_code, kExitNotConverged);

  m.events_path = (dir.path / "events_bad.csv").string();
  std::ofstream(m.events_path) << "ev_id,arrival_step,departure_step\n";
  EXPECT_THROW(run_experiment(m), ParseError);
}

}  // namespace
}  // namespace evadmm
