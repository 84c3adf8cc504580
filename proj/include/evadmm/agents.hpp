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

#include "evadmm/miqp.hpp"
#include "evadmm/scenario.hpp"

namespace evadmm {

/// Variable layout [p_ch; p_dis; u_ch; u_dis] of a subproblem covering the
/// steps [begin, begin + T), each block of length T. Index t is the local
/// step; begin + t is the step on the grid.
struct PowerLayout {
  int T = 0;
  int begin = 0;
  int p_ch(int t) const { return t; }
  int p_dis(int t) const { return T + t; }
  int u_ch(int t) const { return 2 * T + t; }
  int u_dis(int t) const { return 3 * T + t; }
  int size() const { return 4 * T; }
};

/// Layout of an EV subproblem: the span from the first to the last available
/// step (outside it every flow is zero), or step 0 alone for a vehicle that
/// is never plugged in.
PowerLayout ev_layout(const EvSpec& spec, const TimeGrid& grid);

/// Local state of one vehicle between ADMM iterations.
struct EvAgent {
  EvSpec spec;
  TimeGrid grid;
  /// x_i^k, kW.
  Eigen::VectorXd last_profile;
  /// Root active set of the previous solve, reused as a warm start.
  ActiveSet hint;
  /// Branch-and-bound nodes of the most recent solve.
  int last_nodes = 0;
  /// Number of solves that stopped at the node budget.
  int gap_limited_solves = 0;

  EvAgent() = default;
  EvAgent(EvSpec spec, const TimeGrid& grid);
};

/// The aggregator, sub-problem 0 with x_0 = -x_a.
struct EvaAgent {
  AggregatorSpec spec;
  Eigen::VectorXd demand;
  Tariff tariff;
  TimeGrid grid;
  /// x_0^k, kW.
  Eigen::VectorXd last_profile;
  ActiveSet hint;
  int gap_limited_solves = 0;

  EvaAgent() = default;
  EvaAgent(const Scenario& scenario);
};

/// Battery constraints of one EV over ev_layout with a zero objective. See
/// build_ev_subproblem for the v2g and constraint-model variants.
MiqpProblem build_ev_feasible_set(const EvSpec& spec, const TimeGrid& grid, bool v2g,
                                  ConstraintModel model = ConstraintModel::kFull);

/// Degradation update of one EV:
///
///   minimize  gamma*alpha*||x||^2 + (rho/2)*||x - x^k + xbar + lambda/rho||^2
///
/// over the battery constraints, with x = p_ch - p_dis eliminated. With
/// v2g = false the discharge variables are fixed to zero and u_ch to the
/// availability, leaving a pure QP. The relaxed model uses unit efficiencies,
/// drops the state-of-charge corridor and relaxes the indicators to [0, 1],
/// which leaves p_ch / cap_ch + p_dis / cap_dis <= A_t with the indicator
/// variables pinned at zero. Variables follow ev_layout. Throws InfeasibleScenario if no
/// schedule meets the target.
MiqpProblem build_ev_subproblem(const EvAgent& agent, const Eigen::VectorXd& xbar,
                                const Eigen::VectorXd& lambda, double rho, double gamma,
                                bool v2g, ConstraintModel model = ConstraintModel::kFull);

/// Turns a subproblem solution into a Schedule: rounds indicators, removes
/// round-off outside [0, cap * u], nets simultaneous flows for the relaxed
/// model and rebuilds the energy trajectory. `z` follows ev_layout.
Schedule extract_schedule(const EvSpec& spec, const TimeGrid& grid, const Eigen::VectorXd& z,
                          ConstraintModel model);

/// Solves the EV subproblem, stores x_i^{k+1} in the agent and returns the
/// schedule.
Schedule ev_update(EvAgent& agent, const Eigen::VectorXd& xbar, const Eigen::VectorXd& lambda,
                   const AdmmConfig& config);

/// x_0 = (rho/(rho+2 delta)) (x_0^k - xbar - lambda/rho) + (2 delta/(rho+2 delta)) D.
Eigen::VectorXd eva_lvm_update_closed_form(const EvaAgent& agent, const Eigen::VectorXd& xbar,
                                           const Eigen::VectorXd& lambda, double rho,
                                           double delta);

/// Same minimiser of delta*||D - x_0||^2 + (rho/2)||x_0 - x_0^k + xbar + lambda/rho||^2
/// via solve_qp; with `apply_caps`, -x_0 is kept inside the aggregate caps.
Eigen::VectorXd eva_lvm_update_qp(const EvaAgent& agent, const Eigen::VectorXd& xbar,
                                  const Eigen::VectorXd& lambda, double rho, double delta,
                                  bool apply_caps = false, double qp_tol = 1e-8);

/// Charging-cost subproblem of the aggregator: the tariff cost of
/// x_a = p_ch_a - p_dis_a plus the augmented term in x_0 = -x_a, with
/// import/export indicators and the aggregate caps.
MiqpProblem build_ccm_subproblem(const EvaAgent& agent, const Eigen::VectorXd& xbar,
                                 const Eigen::VectorXd& lambda, double rho);

/// Solves build_ccm_subproblem, stores and returns x_0^{k+1}.
Eigen::VectorXd eva_ccm_update(EvaAgent& agent, const Eigen::VectorXd& xbar,
                               const Eigen::VectorXd& lambda, double rho,
                               const AdmmConfig& config);

/// Runs the aggregator update selected by the scenario objective and the
/// config, storing x_0^{k+1} in the agent.
Eigen::VectorXd eva_update(EvaAgent& agent, const Eigen::VectorXd& xbar,
                           const Eigen::VectorXd& lambda, const AdmmConfig& config);

}  // namespace evadmm
