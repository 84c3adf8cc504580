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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "evadmm/coordinator.hpp"
#include "evadmm/scenario.hpp"

namespace evadmm {

/// Malformed input file. `line` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, int line, const std::string& what);
  const std::string& file() const { return file_; }
  int line() const { return line_; }

 private:
  std::string file_;
  int line_;
};

/// Deterministic synthetic instance: double-peaked base demand, contiguous
/// availability windows of at least 8 steps (or T if shorter), and
/// requirements between 20% and 80% of the reachable energy, so every
/// vehicle passes feasibility_check.
Scenario synth_scenario(int n_evs, int steps, int steps_per_hour, std::uint64_t seed,
                        AggregatorObjective objective = AggregatorObjective::kLoadVariance);

/// Parsed key=value config ('#' starts a comment). Keys left out stay unset
/// so that callers can apply objective-dependent defaults. Recognized keys:
/// rho, gamma, eps_p, eps_d, delta, qp_tol, miqp_gap, max_iter,
/// miqp_max_nodes, steps_per_hour, num_threads, mode (gauss-seidel, jacobi),
/// v2g, lvm_caps, objective (lvm, ccm), model (full, relaxed), p_ch_max_agg,
/// p_dis_max_agg, peak_start, peak_end.
struct ConfigFile {
  std::optional<double> rho, gamma, eps_p, eps_d, delta, qp_tol, miqp_gap;
  std::optional<int> max_iter, miqp_max_nodes, steps_per_hour, num_threads;
  std::optional<UpdateMode> mode;
  std::optional<bool> v2g, lvm_caps;
  std::optional<AggregatorObjective> objective;
  std::optional<ConstraintModel> model;
  std::optional<double> p_ch_max_agg, p_dis_max_agg, peak_start, peak_end;
};

ConfigFile parse_config(const std::string& text, const std::string& name = "config");
/// Defaults for the objective, then the keys present in `file`.
AdmmConfig resolve_config(const ConfigFile& file, AggregatorObjective objective,
                          const TimeGrid& grid);

struct LoadedScenario {
  Scenario scenario;
  AdmmConfig config;
  ConfigFile config_file;
};

/// Reads demand.csv (step,kw), events.csv (ev_id,arrival_step,departure_step,
/// required_kwh plus optional override columns), tariff.csv
/// (step,price_ch,price_dis) and a key=value config. Empty tariff or config
/// paths select the defaults. Throws ParseError or ValidationError.
LoadedScenario load_scenario(const std::string& demand_path, const std::string& events_path,
                             const std::string& tariff_path = "",
                             const std::string& config_path = "");

/// Same as load_scenario on in-memory file contents.
LoadedScenario parse_scenario(const std::string& demand_csv, const std::string& events_csv,
                              const std::string& tariff_csv, const std::string& config_text);

struct ScenarioText {
  std::string demand_csv;
  std::string events_csv;
  std::string tariff_csv;
  std::string config_text;
};

/// Text form of a scenario that parse_scenario maps back to the same data.
/// Vehicles must have contiguous availability windows.
ScenarioText serialize(const Scenario& scenario, const AdmmConfig& config);

/// Writes demand.csv, events.csv, tariff.csv and config.txt into `dir`.
void write_scenario(const Scenario& scenario, const AdmmConfig& config, const std::string& dir);

/// What to run: inputs (files or a synthetic instance) and the experiment
/// matrix objective x gamma x v2g x constraint model.
struct RunManifest {
  std::string demand_path, events_path, tariff_path, config_path;
  bool synthetic = false;
  int synth_evs = 10;
  int synth_steps = 96;
  int synth_steps_per_hour = 4;
  std::uint64_t seed = 1;
  // Empty lists take the single value from the config file.
  std::vector<AggregatorObjective> objectives;
  std::vector<double> gammas;
  std::vector<bool> v2g;
  std::vector<ConstraintModel> models;
  /// Relative to the working directory; empty writes no artifacts.
  std::string out_dir = "results";
};

/// key=value manifest with keys demand, events, tariff, config, synthetic,
/// synth_evs, synth_steps, synth_steps_per_hour, seed, objectives, gammas,
/// v2g, models (comma-separated lists) and out_dir. Input paths are resolved
/// against `base_dir`.
RunManifest parse_manifest(const std::string& text, const std::string& base_dir = ".",
                           const std::string& name = "manifest");
RunManifest load_manifest(const std::string& path);

/// Exit codes of the command-line driver.
enum ExitCode : int {
  kExitOk = 0,
  kExitInfeasible = 2,
  kExitNotConverged = 3,
  kExitInvalidInput = 4,
};

struct CellResult {
  std::string name;
  AggregatorObjective objective;
  double gamma;
  bool v2g;
  ConstraintModel model;
  RunResult run;
  std::string error;  // empty on success
  int exit_code = kExitOk;
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  int exit_code = kExitOk;
};

/// Runs every cell of the matrix. When `out_dir` is non-empty, writes
/// results.json (deterministic; no timings), runtime.csv and, under
/// cells/<name>/, residuals.csv, profile.csv and schedules.csv. Failed cells
/// are recorded with their exit code and the run continues; the overall code
/// is that of the first failed cell. Input errors throw ParseError or
/// ValidationError after the finished cells have been written.
ExperimentResult run_experiment(const RunManifest& manifest, std::ostream* log = nullptr);

/// results.json text for the given cells.
std::string results_json(const std::vector<CellResult>& cells, std::uint64_t seed);

std::string to_string(AggregatorObjective objective);
std::string to_string(ConstraintModel model);
std::string to_string(UpdateMode mode);

}  // namespace evadmm
