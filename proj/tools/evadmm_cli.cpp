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

/// Command-line driver: runs experiment matrices and writes synthetic
/// scenarios. The output directory is taken from --out, then the
/// EVADMM_OUT_DIR environment variable, then the manifest.

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif

#include "evadmm/io.hpp"

namespace {

using namespace evadmm;

/// Matrix and input options shared by the experiment subcommands.
struct InputOptions {
  std::string manifest;
  std::string demand, events, tariff, config;
  bool synthetic = false;
  int evs = -1, steps = -1, steps_per_hour = -1;
  long long seed = -1;
  std::vector<std::string> objectives, models, v2g;
  std::vector<double> gammas;
  std::string out;
};

void add_input_options(CLI::App* app, InputOptions& o) {
  app->add_option("-m,--manifest", o.manifest, "Run manifest (key=value)");
  app->add_option("--demand", o.demand, "demand.csv (step,kw)");
  app->add_option("--events", o.events, "events.csv (ev_id,arrival_step,departure_step,required_kwh)");
  app->add_option("--tariff", o.tariff, "tariff.csv (step,price_ch,price_dis)");
  app->add_option("--config", o.config, "key=value solver config");
  app->add_flag("--synthetic", o.synthetic, "Use a generated scenario");
  app->add_option("--evs", o.evs, "Vehicles in the generated scenario")->check(CLI::PositiveNumber);
  app->add_option("--steps", o.steps, "Steps in the generated scenario")->check(CLI::PositiveNumber);
  app->add_option("--steps-per-hour", o.steps_per_hour, "Steps per hour")
      ->check(CLI::PositiveNumber);
  app->add_option("--seed", o.seed, "Seed of the generated scenario")->check(CLI::NonNegativeNumber);
  app->add_option("--objective", o.objectives, "lvm and/or ccm")->delimiter(',');
  app->add_option("--gamma", o.gammas, "Degradation weights")->delimiter(',');
  app->add_option("--v2g", o.v2g, "on and/or off")->delimiter(',');
  app->add_option("--model", o.models, "full and/or relaxed")->delimiter(',');
  app->add_option("-o,--out", o.out, "Output directory");
}

RunManifest build_manifest(const InputOptions& o) {
  RunManifest m;
  if (!o.manifest.empty()) {
    m = load_manifest(o.manifest);
  } else if (!o.synthetic && (o.demand.empty() || o.events.empty())) {
    throw ParseError("command line", 0, "give --manifest, --demand and --events, or --synthetic");
  }
  if (!o.demand.empty()) m.demand_path = o.demand;
  if (!o.events.empty()) m.events_path = o.events;
  if (!o.tariff.empty()) m.tariff_path = o.tariff;
  if (!o.config.empty()) m.config_path = o.config;
  if (o.synthetic) m.synthetic = true;
  if (o.evs > 0) m.synth_evs = o.evs;
  if (o.steps > 0) m.synth_steps = o.steps;
  if (o.steps_per_hour > 0) m.synth_steps_per_hour = o.steps_per_hour;
  if (o.seed >= 0) m.seed = static_cast<std::uint64_t>(o.seed);

  // Reuse the manifest grammar for list values so both inputs behave alike.
  std::string text;
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s;
  };
  if (!o.objectives.empty()) text += "objectives = " + join(o.objectives) + "\n";
  if (!o.models.empty()) text += "models = " + join(o.models) + "\n";
  if (!o.v2g.empty()) text += "v2g = " + join(o.v2g) + "\n";
  text += "synthetic = true\n";
  const RunManifest lists = parse_manifest(text, ".", "command line");
  if (!o.objectives.empty()) m.objectives = lists.objectives;
  if (!o.models.empty()) m.models = lists.models;
  if (!o.v2g.empty()) m.v2g = lists.v2g;
  for (double g : o.gammas) {
    if (!(g >= 0.0)) throw ParseError("command line", 0, "--gamma values must be >= 0");
  }
  if (!o.gammas.empty()) m.gammas = o.gammas;

  if (const char* env = std::getenv("EVADMM_OUT_DIR"); env && *env) m.out_dir = env;
  if (!o.out.empty()) m.out_dir = o.out;
  return m;
}

void print_summary(const ExperimentResult& r) {
  std::cout << std::left << std::setw(34) << "cell" << std::setw(15) << "status" << std::right
            << std::setw(6) << "iter" << std::setw(13) << "objective" << std::setw(12)
            << "variance" << std::setw(10) << "cost" << std::setw(12) << "degradation"
            << std::setw(9) << "peak" << '\n';
  for (const auto& c : r.cells) {
    std::cout << std::left << std::setw(34) << c.name << std::setw(15)
              << (c.exit_code == kExitOk            ? "converged"
                  : c.exit_code == kExitInfeasible  ? "infeasible"
                  : c.exit_code == kExitInvalidInput ? "invalid"
                                                     : "not-converged")
              << std::right << std::setw(6) << c.run.iterations << std::fixed
              << std::setprecision(4) << std::setw(13) << c.run.objective << std::setw(12)
              << c.run.metrics.load_variance << std::setw(10) << c.run.metrics.charging_cost
              << std::setw(12) << c.run.metrics.degradation_cost << std::setw(9)
              << c.run.metrics.peak_kw << '\n';
    std::cout.unsetf(std::ios::fixed);
    if (!c.error.empty()) std::cout << "  " << c.error << '\n';
  }
}

int run_matrix(RunManifest m) {
  const ExperimentResult r = run_experiment(m, &std::cerr);
  print_summary(r);
  if (!m.out_dir.empty()) std::cout << "artifacts: " << m.out_dir << '\n';
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed EV charging coordination with exchange ADMM"};
  app.require_subcommand(1);

  InputOptions run_opt, sweep_opt, v2g_opt, cons_opt;
  CLI::App* run = app.add_subcommand("run", "Run the experiment matrix of a manifest");
  add_input_options(run, run_opt);
  CLI::App* sweep = app.add_subcommand("sweep-gamma", "Sweep the degradation weight (default 0,1,10)");
  add_input_options(sweep, sweep_opt);
  CLI::App* v2g = app.add_subcommand("compare-v2g", "Compare runs with and without discharging");
  add_input_options(v2g, v2g_opt);
  CLI::App* cons = app.add_subcommand("compare-constraints",
                                      "Compare the full and relaxed battery models");
  add_input_options(cons, cons_opt);

  CLI::App* synth = app.add_subcommand("synth", "Write a generated scenario to files");
  int synth_evs = 10, synth_steps = 96, synth_m = 4;
  long long synth_seed = 1;
  std::string synth_objective = "lvm", synth_out;
  synth->add_option("--evs", synth_evs, "Vehicles")->check(CLI::PositiveNumber);
  synth->add_option("--steps", synth_steps, "Steps")->check(CLI::PositiveNumber);
  synth->add_option("--steps-per-hour", synth_m, "Steps per hour")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Seed")->check(CLI::NonNegativeNumber);
  synth->add_option("--objective", synth_objective, "lvm or ccm");
  synth->add_option("-o,--out", synth_out, "Directory for demand.csv, events.csv, ...");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalidInput;
  }

  try {
    if (*run) return run_matrix(build_manifest(run_opt));
    if (*sweep) {
      RunManifest m = build_manifest(sweep_opt);
      if (sweep_opt.gammas.empty()) m.gammas = {0.0, 1.0, 10.0};
      return run_matrix(m);
    }
    if (*v2g) {
      RunManifest m = build_manifest(v2g_opt);
      m.v2g = {false, true};
      return run_matrix(m);
    }
    if (*cons) {
      RunManifest m = build_manifest(cons_opt);
      m.models = {ConstraintModel::kFull, ConstraintModel::kRelaxed};
      if (cons_opt.v2g.empty()) m.v2g = {false, true};
      return run_matrix(m);
    }
    if (*synth) {
      const RunManifest lists =
          parse_manifest("synthetic = true\nobjectives = " + synth_objective + "\n", ".",
                         "command line");
      const AggregatorObjective objective = lists.objectives.front();
      const Scenario s = synth_scenario(synth_evs, synth_steps, synth_m,
                                        static_cast<std::uint64_t>(synth_seed), objective);
      std::string dir = synth_out;
      if (dir.empty()) {
        const char* env = std::getenv("EVADMM_OUT_DIR");
        dir = env && *env ? env : "scenario";
      }
      write_scenario(s, default_admm_config(objective, s.grid), dir);
      std::cout << "wrote " << s.evs.size() << " vehicles, " << s.grid.steps << " steps to "
                << dir << '\n';
      return kExitOk;
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitInvalidInput;
  } catch (const ValidationError& e) {
    std::cerr << e.what() << '\n';
    return kExitInvalidInput;
  } catch (const InfeasibleScenario& e) {
    std::cerr << e.what() << '\n';
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
