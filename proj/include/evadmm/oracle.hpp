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

#include <vector>

#include "evadmm/miqp.hpp"
#include "evadmm/scenario.hpp"

namespace evadmm {

enum class OracleMethod { kConvexQp, kEnumeration };

/// Centralized optimum of the coupled problem. x_a is the sum of the
/// schedules and `objective` is F_a(x_a) + gamma * sum_i alpha_i ||x_i||^2
/// evaluated on them.
struct CentralSolution {
  Eigen::VectorXd x_a;
  std::vector<Schedule> schedules;
  double objective = 0.0;
  OracleMethod method = OracleMethod::kConvexQp;
};

/// The monolithic problem over all vehicles. Variables are the stacked
/// ev_layout blocks, followed for charging cost by an aggregate
/// [p_ch_a; p_dis_a; u_ch_a; u_dis_a] block tied to the fleet by
/// p_ch_a - p_dis_a = x_a. For load variance the aggregate caps are rows on
/// x_a when `config.lvm_apply_caps` is set; for charging cost they bound the
/// aggregate block and its indicators are binary. With `convex_ccm` the
/// charging-cost aggregate is replaced by the linear import cost on x_a
/// (valid when no vehicle discharges). `offsets` receives the first column of
/// each vehicle block.
MiqpProblem build_central_problem(const Scenario& scenario, const AdmmConfig& config,
                                  std::vector<int>* offsets = nullptr, bool convex_ccm = false);

/// Global optimum for v2g = false as one convex QP. Applies the aggregate
/// caps to load variance iff `config.lvm_apply_caps`; config.v2g_enabled
/// must be false. Throws InfeasibleScenario, std::invalid_argument for a
/// v2g config and std::runtime_error if the QP does not solve.
CentralSolution solve_centralized_convex(const Scenario& scenario, const AdmmConfig& config);
CentralSolution solve_centralized_convex(const Scenario& scenario, double gamma);

/// Global optimum by exhaustive enumeration of the admissible indicator
/// assignments, one QP each. Throws std::invalid_argument when more than
/// `cap` pairs have a choice, InfeasibleScenario when no assignment works.
CentralSolution solve_centralized_enumeration(const Scenario& scenario, const AdmmConfig& config,
                                              int cap = 12);
CentralSolution solve_centralized_enumeration(const Scenario& scenario, double gamma,
                                              int cap = 12);

}  // namespace evadmm
