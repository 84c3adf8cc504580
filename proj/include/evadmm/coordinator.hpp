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

#include <functional>
#include <vector>

#include "evadmm/agents.hpp"
#include "evadmm/scenario.hpp"

namespace evadmm {

/// Iterate k of the exchange ADMM. `x` holds the N vehicle profiles.
struct AdmmState {
  int k = 0;
  std::vector<Eigen::VectorXd> x;
  Eigen::VectorXd x0;
  Eigen::VectorXd xbar;
  Eigen::VectorXd lambda;

  /// All-zero start for N vehicles and T steps.
  static AdmmState zeros(int num_evs, int steps);
};

struct ResidualRecord {
  int k = 0;
  double primal_norm = 0.0;  // ||xbar^k||_2
  double dual_norm = 0.0;    // ||[s_1; ...; s_N]||_2
  std::vector<double> agent_dual_norms;
};

struct Metrics {
  double load_variance = 0.0;     // kW^2, population variance of D + x_a
  double charging_cost = 0.0;     // $
  double degradation_cost = 0.0;  // sum_i alpha_i ||x_i||^2
  double peak_kw = 0.0;
};

struct RunResult {
  std::vector<Schedule> schedules;
  Eigen::VectorXd x_a;  // sum of the vehicle profiles
  Eigen::VectorXd x0;   // aggregator profile, -x_a at convergence
  Eigen::VectorXd lambda;
  bool converged = false;
  int iterations = 0;
  std::vector<ResidualRecord> history;
  Metrics metrics;
  double objective = 0.0;  // F_a(x_a) + gamma * sum_i alpha_i ||x_i||^2
  double wall_time_s = 0.0;
  /// Local MIQP solves that stopped at the node budget.
  int gap_limited_solves = 0;
};

/// Mean of x_0 and the N vehicle profiles.
Eigen::VectorXd compute_xbar(const Eigen::VectorXd& x0, const std::vector<Eigen::VectorXd>& x);

/// lambda + rho * xbar.
Eigen::VectorXd update_dual(const Eigen::VectorXd& lambda, double rho,
                            const Eigen::VectorXd& xbar);

/// r^k = xbar^k and s_i^k = -rho (N+1) (x_i^k - x_i^{k-1} + xbar^{k-1} - xbar^k).
ResidualRecord residuals(const AdmmState& state, const AdmmState& prev, double rho, int num_evs);

Metrics metrics(const RunResult& result, const Scenario& scenario);

/// Aggregator cost F_a at x_a: delta * ||D + x_a||^2 for load variance, the
/// tariff cost of the import/export split for charging cost.
double aggregator_cost(const Scenario& scenario, const Eigen::VectorXd& x_a);

/// F_a(sum_i x_i) + gamma * sum_i alpha_i ||x_i||^2.
double system_objective(const Scenario& scenario, const std::vector<Schedule>& schedules,
                        double gamma);

using IterationCallback = std::function<void(const ResidualRecord&)>;

/// Exchange ADMM from the all-zero state until both residual norms are
/// within tolerance or max_iter is reached. Throws ValidationError for
/// malformed scenarios and InfeasibleScenario when some vehicle cannot meet
/// its target. Without convergence the iterate with the smallest residuals
/// (relative to the tolerances) is returned with converged = false.
RunResult run(const Scenario& scenario, const AdmmConfig& config,
              const IterationCallback& on_iteration = {});

}  // namespace evadmm
