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

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace evadmm {

/// Discrete planning horizon: `steps` intervals of 60/steps_per_hour minutes.
struct TimeGrid {
  int steps = 96;
  int steps_per_hour = 4;

  double step_hours() const { return 1.0 / steps_per_hour; }
  double step_minutes() const { return 60.0 / steps_per_hour; }
  double horizon_hours() const { return steps * step_hours(); }
  /// Hour-of-horizon at the start of step `t`.
  double hour_of(int t) const { return t * step_hours(); }
};

/// One electric vehicle and its battery.
///
/// Per-step arrays have length T. `energy_min[t]` / `energy_max[t]` bound the
/// state of charge at the end of step t. `availability[t]` is 1 while the
/// vehicle is plugged in and 0 otherwise.
struct EvSpec {
  int id = 0;
  Eigen::VectorXd availability;
  double required_energy = 0.0;  // kWh at the end of the horizon
  double initial_energy = 0.0;   // kWh
  Eigen::VectorXd energy_min;    // kWh
  Eigen::VectorXd energy_max;    // kWh
  Eigen::VectorXd p_ch_max;      // kW
  Eigen::VectorXd p_dis_max;     // kW
  double eta_ch = 1.0;
  double eta_dis = 1.0;
  double alpha = 0.0;  // $/kW^2 battery degradation weight
};

/// Time-of-use prices for energy bought from (charge) and sold to
/// (discharge) the grid, in $/kWh.
struct Tariff {
  Eigen::VectorXd price_ch;
  Eigen::VectorXd price_dis;
};

enum class AggregatorObjective { kLoadVariance, kChargingCost };

struct AggregatorSpec {
  Eigen::VectorXd p_ch_max;   // kW, aggregate import cap per step
  Eigen::VectorXd p_dis_max;  // kW, aggregate export cap per step
  double delta = 1e-3;        // weight of the load-flattening objective
  AggregatorObjective objective = AggregatorObjective::kLoadVariance;
};

/// A complete problem instance.
struct Scenario {
  TimeGrid grid;
  Eigen::VectorXd demand;  // kW, non-EV base load
  std::vector<EvSpec> evs;
  Tariff tariff;
  AggregatorSpec aggregator;
};

enum class UpdateMode { kGaussSeidel, kJacobi };

/// Which battery model the EV agents use. kRelaxed drops the conversion
/// efficiencies and the state-of-charge corridor, which removes the binary
/// charge/discharge indicators and leaves a pure QP.
enum class ConstraintModel { kFull, kRelaxed };

struct AdmmConfig {
  double rho = 1e-3;
  double gamma = 1.0;
  double eps_p = 1e-3;
  double eps_d = 1e-3;
  int max_iter = 2000;
  UpdateMode update_mode = UpdateMode::kGaussSeidel;
  bool v2g_enabled = false;
  ConstraintModel constraint_model = ConstraintModel::kFull;
  /// Apply the aggregate caps to the load-variance update (solved as a QP
  /// instead of the closed form).
  bool lvm_apply_caps = false;
  double qp_tol = 1e-8;
  double miqp_gap = 1e-6;
  int miqp_max_nodes = 5000;
  /// Worker threads for the per-iteration EV solves. 0 uses the hardware
  /// concurrency.
  int num_threads = 1;
};

/// Operating profile of one agent. `energy` has T+1 entries; energy[0] is the
/// initial state of charge and energy[t+1] the level after step t.
struct Schedule {
  Eigen::VectorXd x;  // kW, p_ch - p_dis
  Eigen::VectorXd p_ch;
  Eigen::VectorXd p_dis;
  Eigen::VectorXd u_ch;
  Eigen::VectorXd u_dis;
  Eigen::VectorXd energy;
};

/// Scalar Table-I style defaults for a vehicle.
struct EvDefaults {
  double p_ch_max = 8.0;
  double p_dis_max = 8.0;
  double energy_min = 2.5;
  double energy_max = 50.0;
  double initial_energy = 2.5;
  double eta_ch = 0.90;
  double eta_dis = 0.88;
  double alpha = 0.0125;
};

struct AggregatorDefaults {
  double p_ch_max = 136.0;
  double p_dis_max = 136.0;
  double delta = 1e-3;
};

struct ScenarioDefaults {
  EvDefaults ev;
  AggregatorDefaults aggregator;
};

ScenarioDefaults default_scenario_params();

/// Penalty 1e-3 for load variance and 1 for charging cost; residual
/// tolerances 1e-3 * sqrt(T).
AdmmConfig default_admm_config(AggregatorObjective objective,
                               const TimeGrid& grid);
double default_rho(AggregatorObjective objective);

/// Builds a vehicle that is available on the contiguous window
/// [arrival, departure) and must gain `added_energy` kWh.
EvSpec make_ev(const EvDefaults& defaults, const TimeGrid& grid, int id,
               int arrival, int departure, double added_energy);

AggregatorSpec make_aggregator(const AggregatorDefaults& defaults,
                               const TimeGrid& grid,
                               AggregatorObjective objective);

/// Two-level time-of-use tariff: 0.38 $/kWh on [peak_start, peak_end) hours
/// and 0.14 $/kWh elsewhere. The sell-back price is 40% of the buy price.
Tariff default_tariff(const TimeGrid& grid, double peak_start = 16.0,
                      double peak_end = 21.0);

/// Returns one message per violated invariant; empty when the scenario is
/// well formed.
std::vector<std::string> validate(const Scenario& scenario);
std::vector<std::string> validate(const EvSpec& ev, const TimeGrid& grid);

struct Feasibility {
  bool feasible = true;
  std::string reason;
  explicit operator bool() const { return feasible; }
};

/// Decides whether some schedule meets the terminal energy target while
/// staying inside the state-of-charge corridor. The check propagates the
/// interval of reachable energy levels step by step, which is exact because
/// every level between the extreme one-step moves is attainable.
Feasibility feasibility_check(const EvSpec& ev, const TimeGrid& grid, bool v2g,
                              ConstraintModel model = ConstraintModel::kFull);

/// Energy levels E[0..T] for the given charge/discharge powers.
Eigen::VectorXd energy_trajectory(const EvSpec& ev,
                                  const Eigen::VectorXd& p_ch,
                                  const Eigen::VectorXd& p_dis,
                                  const TimeGrid& grid);

/// Same recursion with unit efficiencies; used by the relaxed model.
Eigen::VectorXd lossless_energy_trajectory(const EvSpec& ev,
                                           const Eigen::VectorXd& p_ch,
                                           const Eigen::VectorXd& p_dis,
                                           const TimeGrid& grid);

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// No schedule meets the constraints. `ev_id` is -1 when the conflict is
/// fleet-wide (aggregate caps) rather than in one vehicle.
class InfeasibleScenario : public std::runtime_error {
 public:
  InfeasibleScenario(int ev_id, const std::string& reason);
  int ev_id() const { return ev_id_; }

 private:
  int ev_id_;
};

}  // namespace evadmm
