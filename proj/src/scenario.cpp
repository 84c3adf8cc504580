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

#include "evadmm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace evadmm {
namespace {

constexpr double kEnergyTol = 1e-9;

std::string join(const std::vector<std::string>& items) {
  std::ostringstream out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out << "; ";
    out << items[i];
  }
  return out.str();
}

void check_length(std::vector<std::string>& out, const std::string& name,
                  const Eigen::VectorXd& v, int expected) {
  if (v.size() != expected) {
    out.push_back("length mismatch: " + name + " has " +
                  std::to_string(v.size()) + " entries, expected " +
                  std::to_string(expected));
  }
}

void check_nonnegative(std::vector<std::string>& out, const std::string& name,
                       const Eigen::VectorXd& v) {
  for (Eigen::Index t = 0; t < v.size(); ++t) {
    if (!std::isfinite(v[t]) || v[t] < 0.0) {
      out.push_back(name + " must be finite and >= 0 (step " +
                    std::to_string(t) + ")");
      return;
    }
  }
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : std::runtime_error("invalid scenario: " + join(violations)),
      violations_(std::move(violations)) {}

InfeasibleScenario::InfeasibleScenario(int ev_id, const std::string& reason)
    : std::runtime_error(ev_id >= 0 ? "EV " + std::to_string(ev_id) + " is infeasible: " + reason
                                    : "scenario is infeasible: " + reason),
      ev_id_(ev_id) {}

ScenarioDefaults default_scenario_params() { return ScenarioDefaults{}; }

double default_rho(AggregatorObjective objective) {
  return objective == AggregatorObjective::kLoadVariance ? 1e-3 : 1.0;
}

AdmmConfig default_admm_config(AggregatorObjective objective,
                               const TimeGrid& grid) {
  AdmmConfig cfg;
  cfg.rho = default_rho(objective);
  cfg.eps_p = 1e-3 * std::sqrt(static_cast<double>(grid.steps));
  cfg.eps_d = cfg.eps_p;
  return cfg;
}

EvSpec make_ev(const EvDefaults& defaults, const TimeGrid& grid, int id,
               int arrival, int departure, double added_energy) {
  const int T = grid.steps;
  EvSpec ev;
  ev.id = id;
  ev.availability = Eigen::VectorXd::Zero(T);
  for (int t = std::max(0, arrival); t < std::min(T, departure); ++t) {
    ev.availability[t] = 1.0;
  }
  ev.initial_energy = defaults.initial_energy;
  ev.required_energy = defaults.initial_energy + added_energy;
  ev.energy_min = Eigen::VectorXd::Constant(T, defaults.energy_min);
  ev.energy_max = Eigen::VectorXd::Constant(T, defaults.energy_max);
  ev.p_ch_max = Eigen::VectorXd::Constant(T, defaults.p_ch_max);
  ev.p_dis_max = Eigen::VectorXd::Constant(T, defaults.p_dis_max);
  ev.eta_ch = defaults.eta_ch;
  ev.eta_dis = defaults.eta_dis;
  ev.alpha = defaults.alpha;
  return ev;
}

AggregatorSpec make_aggregator(const AggregatorDefaults& defaults,
                               const TimeGrid& grid,
                               AggregatorObjective objective) {
  AggregatorSpec agg;
  agg.p_ch_max = Eigen::VectorXd::Constant(grid.steps, defaults.p_ch_max);
  agg.p_dis_max = Eigen::VectorXd::Constant(grid.steps, defaults.p_dis_max);
  agg.delta = defaults.delta;
  agg.objective = objective;
  return agg;
}

Tariff default_tariff(const TimeGrid& grid, double peak_start,
                      double peak_end) {
  if (!(peak_start >= 0.0 && peak_start <= peak_end && peak_end <= 24.0)) {
    throw std::invalid_argument(
        "default_tariff: peak window must satisfy 0 <= start <= end <= 24");
  }
  constexpr double kOffPeak = 0.14;
  constexpr double kPeak = 0.38;
  constexpr double kSellBackRatio = 0.4;
  Tariff tariff;
  tariff.price_ch.resize(grid.steps);
  for (int t = 0; t < grid.steps; ++t) {
    // Hour of day, so horizons longer than a day repeat the pattern.
    const double hour = std::fmod(grid.hour_of(t), 24.0);
    tariff.price_ch[t] =
        (hour >= peak_start && hour < peak_end) ? kPeak : kOffPeak;
  }
  tariff.price_dis = kSellBackRatio * tariff.price_ch;
  return tariff;
}

std::vector<std::string> validate(const EvSpec& ev, const TimeGrid& grid) {
  std::vector<std::string> out;
  const int T = grid.steps;
  const std::string tag = "EV " + std::to_string(ev.id) + ": ";
  check_length(out, tag + "availability", ev.availability, T);
  check_length(out, tag + "energy_min", ev.energy_min, T);
  check_length(out, tag + "energy_max", ev.energy_max, T);
  check_length(out, tag + "p_ch_max", ev.p_ch_max, T);
  check_length(out, tag + "p_dis_max", ev.p_dis_max, T);
  if (!out.empty()) return out;

  for (int t = 0; t < T; ++t) {
    const double a = ev.availability[t];
    if (a != 0.0 && a != 1.0) {
      out.push_back(tag + "availability must be 0 or 1 (step " +
                    std::to_string(t) + ")");
      break;
    }
  }
  if (!(ev.eta_ch > 0.0 && ev.eta_ch <= 1.0)) {
    out.push_back(tag + "eta_ch out of range (0, 1]");
  }
  if (!(ev.eta_dis > 0.0 && ev.eta_dis <= 1.0)) {
    out.push_back(tag + "eta_dis out of range (0, 1]");
  }
  if (!(ev.alpha >= 0.0) || !std::isfinite(ev.alpha)) {
    out.push_back(tag + "alpha must be >= 0");
  }
  check_nonnegative(out, tag + "p_ch_max", ev.p_ch_max);
  check_nonnegative(out, tag + "p_dis_max", ev.p_dis_max);
  for (int t = 0; t < T; ++t) {
    if (!(ev.energy_min[t] <= ev.energy_max[t])) {
      out.push_back(tag + "energy_min exceeds energy_max (step " +
                    std::to_string(t) + ")");
      break;
    }
  }
  if (T >= 1) {
    if (!(ev.initial_energy >= ev.energy_min[0] - kEnergyTol &&
          ev.initial_energy <= ev.energy_max[0] + kEnergyTol)) {
      out.push_back(tag + "initial_energy outside [energy_min, energy_max]");
    }
    if (!(ev.required_energy >= ev.energy_min[T - 1] - kEnergyTol &&
          ev.required_energy <= ev.energy_max[T - 1] + kEnergyTol)) {
      out.push_back(tag + "required_energy outside [energy_min, energy_max]");
    }
  }
  return out;
}

std::vector<std::string> validate(const Scenario& s) {
  std::vector<std::string> out;
  const int T = s.grid.steps;
  if (T < 1) out.push_back("grid: steps must be >= 1");
  if (s.grid.steps_per_hour < 1) out.push_back("grid: steps_per_hour must be >= 1");
  if (!out.empty()) return out;

  check_length(out, "demand", s.demand, T);
  check_length(out, "tariff.price_ch", s.tariff.price_ch, T);
  check_length(out, "tariff.price_dis", s.tariff.price_dis, T);
  check_length(out, "aggregator.p_ch_max", s.aggregator.p_ch_max, T);
  check_length(out, "aggregator.p_dis_max", s.aggregator.p_dis_max, T);
  if (!out.empty()) return out;

  if (!s.demand.allFinite()) out.push_back("demand must be finite");
  check_nonnegative(out, "tariff.price_ch", s.tariff.price_ch);
  check_nonnegative(out, "tariff.price_dis", s.tariff.price_dis);
  check_nonnegative(out, "aggregator.p_ch_max", s.aggregator.p_ch_max);
  check_nonnegative(out, "aggregator.p_dis_max", s.aggregator.p_dis_max);
  if (s.aggregator.objective == AggregatorObjective::kLoadVariance &&
      !(s.aggregator.delta > 0.0)) {
    out.push_back("aggregator.delta must be > 0 for load-variance objective");
  }
  for (const auto& ev : s.evs) {
    auto ev_out = validate(ev, s.grid);
    out.insert(out.end(), ev_out.begin(), ev_out.end());
  }
  return out;
}

Feasibility feasibility_check(const EvSpec& ev, const TimeGrid& grid, bool v2g,
                              ConstraintModel model) {
  const int T = grid.steps;
  const double m = grid.steps_per_hour;
  const bool full = model == ConstraintModel::kFull;
  const double eta_ch = full ? ev.eta_ch : 1.0;
  const double eta_dis = full ? ev.eta_dis : 1.0;

  // Interval [lo, hi] of energy levels reachable at the end of each step.
  double lo = ev.initial_energy;
  double hi = ev.initial_energy;
  for (int t = 0; t < T; ++t) {
    const double a = ev.availability[t];
    hi += a * ev.p_ch_max[t] * eta_ch / m;
    if (v2g) lo -= a * ev.p_dis_max[t] / (eta_dis * m);
    if (full) {
      lo = std::max(lo, ev.energy_min[t]);
      hi = std::min(hi, ev.energy_max[t]);
      if (lo > hi + kEnergyTol) {
        return {false, "state-of-charge corridor is empty at step " +
                           std::to_string(t)};
      }
    }
  }
  if (ev.required_energy > hi + kEnergyTol) {
    return {false, "unreachable requirement"};
  }
  if (ev.required_energy < lo - kEnergyTol) {
    return {false, v2g ? "requirement below dischargeable floor"
                       : "requirement below initial energy without V2G"};
  }
  return {true, {}};
}

namespace {

Eigen::VectorXd trajectory(double e0, const Eigen::VectorXd& p_ch,
                           const Eigen::VectorXd& p_dis, double eta_ch,
                           double eta_dis, double m) {
  const Eigen::Index T = p_ch.size();
  if (p_dis.size() != T) {
    throw std::invalid_argument("energy_trajectory: power length mismatch");
  }
  Eigen::VectorXd e(T + 1);
  e[0] = e0;
  for (Eigen::Index t = 0; t < T; ++t) {
    e[t + 1] = e[t] + (eta_ch * p_ch[t] - p_dis[t] / eta_dis) / m;
  }
  return e;
}

}  // namespace

Eigen::VectorXd energy_trajectory(const EvSpec& ev, const Eigen::VectorXd& p_ch,
                                  const Eigen::VectorXd& p_dis,
                                  const TimeGrid& grid) {
  return trajectory(ev.initial_energy, p_ch, p_dis, ev.eta_ch, ev.eta_dis,
                    grid.steps_per_hour);
}

Eigen::VectorXd lossless_energy_trajectory(const EvSpec& ev,
                                           const Eigen::VectorXd& p_ch,
                                           const Eigen::VectorXd& p_dis,
                                           const TimeGrid& grid) {
  return trajectory(ev.initial_energy, p_ch, p_dis, 1.0, 1.0,
                    grid.steps_per_hour);
}

}  // namespace evadmm
