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

#include <random>

#include "evadmm/coordinator.hpp"
#include "evadmm/io.hpp"
#include "evadmm/oracle.hpp"
#include "schedule_checks.hpp"

namespace evadmm {
namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(ComputeXbar, MeanOverAllAgents) {
  EXPECT_EQ(compute_xbar(vec({2.0}), {vec({4.0})}), vec({3.0}));
  const Eigen::VectorXd a = vec({1.0, -2.0}), b = vec({0.5, 4.0});
  EXPECT_LE(compute_xbar(-(a + b), {a, b}).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(compute_xbar(Eigen::VectorXd::Zero(3), {Eigen::VectorXd::Zero(3)}),
            Eigen::VectorXd::Zero(3));
  EXPECT_THROW(compute_xbar(vec({1.0}), {vec({1.0, 2.0})}), std::invalid_argument);
}

TEST(UpdateDual, AddsScaledAverage) {
  const Eigen::VectorXd lambda = vec({0.3, -0.7});
  EXPECT_EQ(update_dual(lambda, 5.0, Eigen::VectorXd::Zero(2)), lambda);
  EXPECT_EQ(update_dual(Eigen::VectorXd::Zero(2), 2.0, vec({1.0, -1.0})), vec({2.0, -2.0}));
  const Eigen::VectorXd xbar = vec({0.25, 1.5});
  const Eigen::VectorXd twice = update_dual(update_dual(lambda, 0.5, xbar), 0.5, xbar);
  EXPECT_LE((twice - (lambda + 2.0 * 0.5 * xbar)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(UpdateDual, TelescopesOverIterations) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  const double rho = 0.37;
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(6), sum = Eigen::VectorXd::Zero(6);
  for (int k = 0; k < 200; ++k) {
    Eigen::VectorXd xbar(6);
    for (int t = 0; t < 6; ++t) xbar[t] = n(rng);
    lambda = update_dual(lambda, rho, xbar);
    sum += xbar;
  }
  EXPECT_LE((lambda - rho * sum).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Residuals, HandExamples) {
  AdmmState prev = AdmmState::zeros(1, 1), cur = AdmmState::zeros(1, 1);
  cur.k = 1;
  ResidualRecord r = residuals(cur, prev, 1.0, 1);
  EXPECT_EQ(r.primal_norm, 0.0);
  EXPECT_EQ(r.dual_norm, 0.0);

  // s_1 = -rho (N + 1) (dx + xbar_prev - xbar) = -2 (1 - 0.5).
  cur.x[0] = vec({1.0});
  cur.xbar = vec({0.5});
  r = residuals(cur, prev, 1.0, 1);
  EXPECT_DOUBLE_EQ(r.primal_norm, 0.5);
  ASSERT_EQ(r.agent_dual_norms.size(), 1u);
  EXPECT_DOUBLE_EQ(r.agent_dual_norms[0], 1.0);
  EXPECT_DOUBLE_EQ(r.dual_norm, 1.0);
}

TEST(Residuals, DualNormStacksAgents) {
  AdmmState prev = AdmmState::zeros(2, 2), cur = AdmmState::zeros(2, 2);
  cur.x[0] = vec({3.0, 0.0});
  cur.x[1] = vec({0.0, 4.0});
  const ResidualRecord r = residuals(cur, prev, 0.5, 2);
  EXPECT_DOUBLE_EQ(r.agent_dual_norms[0], 4.5);
  EXPECT_DOUBLE_EQ(r.agent_dual_norms[1], 6.0);
  EXPECT_DOUBLE_EQ(r.dual_norm, 7.5);
}

Scenario one_step_scenario() {
  Scenario s;
  s.grid = TimeGrid{1, 4};
  s.demand = vec({5.0});
  s.tariff.price_ch = vec({0.38});
  s.tariff.price_dis = vec({0.1});
  s.aggregator = make_aggregator(default_scenario_params().aggregator, s.grid,
                                 AggregatorObjective::kLoadVariance);
  return s;
}

TEST(Metrics, HandExamples) {
  const Scenario s = one_step_scenario();
  RunResult r;
  r.x_a = vec({8.0});
  Metrics m = metrics(r, s);
  EXPECT_DOUBLE_EQ(m.charging_cost, 0.76);
  EXPECT_DOUBLE_EQ(m.load_variance, 0.0);
  EXPECT_DOUBLE_EQ(m.peak_kw, 13.0);

  Scenario two = synth_scenario(2, 8, 4, 5);
  r.x_a = Eigen::VectorXd::Zero(8);
  m = metrics(r, two);
  const double mean = two.demand.mean();
  EXPECT_NEAR(m.load_variance, (two.demand.array() - mean).square().mean(), 1e-12);
  EXPECT_EQ(m.charging_cost, 0.0);

  r.x_a = Eigen::VectorXd::Constant(8, 100.0) - two.demand;
  EXPECT_NEAR(metrics(r, two).load_variance, 0.0, 1e-10);
}

TEST(Run, IdleVehicleConvergesImmediately) {
  Scenario s;
  s.grid = TimeGrid{4, 4};
  s.demand = Eigen::VectorXd::Zero(4);
  s.tariff = default_tariff(s.grid);
  s.aggregator = make_aggregator(default_scenario_params().aggregator, s.grid,
                                 AggregatorObjective::kLoadVariance);
  EvSpec ev = make_ev(default_scenario_params().ev, s.grid, 1, 0, 4, 0.0);
  ev.availability.setZero();
  s.evs.push_back(ev);
  const RunResult r = run(s, default_admm_config(AggregatorObjective::kLoadVariance, s.grid));
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 2);
  EXPECT_EQ(r.x_a.cwiseAbs().maxCoeff(), 0.0);
  ASSERT_FALSE(r.history.empty());
  EXPECT_EQ(r.history.back().primal_norm, 0.0);
  EXPECT_EQ(r.history.back().dual_norm, 0.0);
}

TEST(Run, ConservationAndFeasibilityAtConvergence) {
  for (AggregatorObjective obj :
       {AggregatorObjective::kLoadVariance, AggregatorObjective::kChargingCost}) {
    const Scenario s = synth_scenario(3, 12, 2, 21, obj);
    AdmmConfig cfg = default_admm_config(obj, s.grid);
    cfg.v2g_enabled = true;
    const RunResult r = run(s, cfg);
    ASSERT_TRUE(r.converged);
    const double n1 = static_cast<double>(s.evs.size() + 1);
    EXPECT_LE((r.x0 + r.x_a).norm(), n1 * cfg.eps_p * (1.0 + 1e-12));
    EXPECT_LE(r.history.back().primal_norm, cfg.eps_p);
    EXPECT_LE(r.history.back().dual_norm, cfg.eps_d);
    for (size_t i = 0; i < s.evs.size(); ++i) {
      const std::string why =
          testing::schedule_violation(s.evs[i], s.grid, r.schedules[i], ConstraintModel::kFull);
      EXPECT_TRUE(why.empty()) << why;
    }
  }
}

TEST(Run, JacobiAndGaussSeidelReachTheSameOptimum) {
  const Scenario s = synth_scenario(2, 8, 2, 9);
  AdmmConfig cfg = default_admm_config(AggregatorObjective::kLoadVariance, s.grid);
  cfg.gamma = 0.0;
  const RunResult gs = run(s, cfg);
  cfg.update_mode = UpdateMode::kJacobi;
  const RunResult jac = run(s, cfg);
  ASSERT_TRUE(gs.converged);
  ASSERT_TRUE(jac.converged);
  const double ref = solve_centralized_convex(s, cfg).objective;
  EXPECT_NEAR(gs.objective, ref, 5e-3 * ref);
  EXPECT_NEAR(jac.objective, ref, 5e-3 * ref);
}

TEST(Run, NonConvergenceReturnsBestState) {
  const Scenario s = synth_scenario(3, 16, 4, 2);
  AdmmConfig cfg = default_admm_config(AggregatorObjective::kLoadVariance, s.grid);
  cfg.max_iter = 3;
  const RunResult r = run(s, cfg);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3);
  EXPECT_EQ(r.history.size(), 3u);
  ASSERT_EQ(r.schedules.size(), 3u);
  for (size_t i = 0; i < s.evs.size(); ++i) {
    EXPECT_TRUE(
        testing::schedule_violation(s.evs[i], s.grid, r.schedules[i], ConstraintModel::kFull)
            .empty());
  }
}

TEST(Run, InfeasibleVehicleIsRejected) {
  Scenario s = synth_scenario(2, 8, 4, 1);
  s.evs[1].required_energy = s.evs[1].initial_energy + 1e3;
  s.evs[1].energy_max.setConstant(2e3);
  try {
    run(s, default_admm_config(AggregatorObjective::kLoadVariance, s.grid));
    FAIL() << "expected InfeasibleScenario";
  } catch (const InfeasibleScenario& e) {
    EXPECT_EQ(e.ev_id(), s.evs[1].id);
  }
}

}  // namespace
}  // namespace evadmm
