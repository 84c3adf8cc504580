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

#include <algorithm>
#include <cmath>
#include <random>

#include "evadmm/agents.hpp"
#include "evadmm/io.hpp"
#include "schedule_checks.hpp"

namespace evadmm {
namespace {

TimeGrid grid4() { return TimeGrid{4, 4}; }

EvSpec table_ev(const TimeGrid& g, int arrival, int departure, double added) {
  return make_ev(default_scenario_params().ev, g, 0, arrival, departure, added);
}

AdmmConfig cfg_for(double rho, double gamma, bool v2g) {
  AdmmConfig cfg;
  cfg.rho = rho;
  cfg.gamma = gamma;
  cfg.v2g_enabled = v2g;
  return cfg;
}

/// Euclidean projection onto {0 <= p <= cap, sum(p) * w = e} by bisection on
/// the multiplier of the sum row.
Eigen::VectorXd project_box_sum(const Eigen::VectorXd& y, const Eigen::VectorXd& cap, double w,
                                double e) {
  auto at = [&](double mu) { return (y.array() - mu).max(0.0).min(cap.array()).matrix(); };
  double lo = y.minCoeff() - cap.maxCoeff() - 1.0, hi = y.maxCoeff() + 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (at(mid).sum() * w > e ? lo : hi) = mid;
  }
  return at(0.5 * (lo + hi));
}

TEST(EvSubproblem, IdleVehicleStaysAtZero) {
  const TimeGrid g = grid4();
  EvSpec ev = table_ev(g, 0, 4, 0.0);
  ev.availability.setZero();
  EvAgent agent(ev, g);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  const MiqpProblem p = build_ev_subproblem(agent, zero, zero, 1.0, 0.0, true);
  const MiqpSolution sol = solve_miqp(p);
  ASSERT_EQ(sol.status, MiqpStatus::kOptimal);
  EXPECT_NEAR(sol.objective, 0.0, 1e-12);
  const Schedule s = ev_update(agent, zero, zero, cfg_for(1.0, 0.0, true));
  EXPECT_LE(s.x.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EvSubproblem, ExactRequirementSaturatesCharging) {
  const TimeGrid g = grid4();
  const EvSpec ev = table_ev(g, 0, 4, 4 * 8.0 * 0.9 / 4);
  EvAgent agent(ev, g);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  for (bool v2g : {false, true}) {
    const Schedule s = ev_update(agent, zero, zero, cfg_for(1.0, 1.0, v2g));
    EXPECT_LE((s.p_ch.array() - 8.0).abs().maxCoeff(), 1e-6) << "v2g=" << v2g;
    EXPECT_LE(s.p_dis.cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(EvSubproblem, TableOneVehicleMatchesEnumeration) {
  const TimeGrid g = grid4();
  EvAgent agent(table_ev(g, 0, 4, 1.8), g);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 4.0);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd xbar(4), lambda(4);
    for (int t = 0; t < 4; ++t) {
      xbar[t] = trial == 0 ? 0.0 : n(rng);
      lambda[t] = trial == 0 ? 0.0 : n(rng);
      agent.last_profile[t] = trial == 0 ? 0.0 : n(rng);
    }
    const MiqpProblem p = build_ev_subproblem(agent, xbar, lambda, 1.0, 1.0, true);
    const MiqpSolution bb = solve_miqp(p);
    const MiqpSolution ex = enumerate_binaries(p);
    ASSERT_EQ(bb.status, MiqpStatus::kOptimal);
    ASSERT_EQ(ex.status, MiqpStatus::kOptimal);
    EXPECT_NEAR(bb.objective, ex.objective, 1e-6) << "trial " << trial;
  }
}

TEST(EvUpdate, WithoutV2gNeverDischarges) {
  const Scenario s = synth_scenario(4, 24, 1, 11);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 10.0);
  for (const auto& ev : s.evs) {
    EvAgent agent(ev, s.grid);
    Eigen::VectorXd xbar(24), lambda(24);
    for (int t = 0; t < 24; ++t) {
      xbar[t] = n(rng);
      lambda[t] = 1e-3 * n(rng);
    }
    const Schedule sch = ev_update(agent, xbar, lambda, cfg_for(1e-3, 1.0, false));
    EXPECT_EQ(sch.u_dis.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(sch.p_dis.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(EvUpdate, SchedulesSatisfyBatteryPhysics) {
  const Scenario s = synth_scenario(6, 24, 2, 3);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 10.0);
  for (ConstraintModel model : {ConstraintModel::kFull, ConstraintModel::kRelaxed}) {
    for (bool v2g : {false, true}) {
      for (const auto& ev : s.evs) {
        EvAgent agent(ev, s.grid);
        Eigen::VectorXd xbar(24), lambda(24);
        for (int t = 0; t < 24; ++t) {
          xbar[t] = n(rng);
          lambda[t] = n(rng);
        }
        AdmmConfig cfg = cfg_for(1.0, 0.5, v2g);
        cfg.constraint_model = model;
        const Schedule sch = ev_update(agent, xbar, lambda, cfg);
        const std::string why = testing::schedule_violation(ev, s.grid, sch, model, v2g);
        EXPECT_TRUE(why.empty()) << why << " (EV " << ev.id << ", v2g " << v2g << ")";
      }
    }
  }
}

TEST(EvUpdate, RepeatedCallIsDeterministic) {
  const Scenario s = synth_scenario(2, 16, 4, 4);
  Eigen::VectorXd xbar = Eigen::VectorXd::LinSpaced(16, -3.0, 5.0);
  Eigen::VectorXd lambda = Eigen::VectorXd::LinSpaced(16, 0.2, -0.1);
  for (const auto& ev : s.evs) {
    EvAgent a(ev, s.grid), b(ev, s.grid);
    const Schedule sa = ev_update(a, xbar, lambda, cfg_for(1.0, 1.0, true));
    const Schedule sb = ev_update(b, xbar, lambda, cfg_for(1.0, 1.0, true));
    EXPECT_EQ(sa.x, sb.x);
    EXPECT_EQ(sa.energy, sb.energy);
  }
}

/// Random charge-only vehicle on 16 steps whose corridor cannot bind: the
/// level only rises from E0 = E_min to R <= E_max.
EvSpec random_charge_only_ev(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> start(0, 8), len(4, 8);
  std::uniform_real_distribution<double> share(0.1, 0.9);
  const TimeGrid g{16, 4};
  const int a = start(rng), d = std::min(16, a + len(rng));
  return table_ev(g, a, d, share(rng) * (d - a) * 8.0 * 0.9 / 4);
}

/// Projected gradient on k/2 ||x||^2 - rho v'x over the charge-only set.
Eigen::VectorXd projected_gradient(const EvSpec& ev, const TimeGrid& g, const Eigen::VectorXd& v,
                                   double k, double rho, int iters) {
  const Eigen::VectorXd cap = ev.p_ch_max.cwiseProduct(ev.availability);
  const double w = ev.eta_ch / g.steps_per_hour, e = ev.required_energy - ev.initial_energy;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(v.size());
  for (int it = 0; it < iters; ++it) {
    x = project_box_sum(x - (k * x - rho * v) / k, cap, w, e);
  }
  return x;
}

TEST(EvUpdateProperty, ConvexCaseMatchesProjectedGradient) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 3.0);
  const TimeGrid g{16, 4};
  for (int trial = 0; trial < 30; ++trial) {
    const EvSpec ev = random_charge_only_ev(rng);
    EvAgent agent(ev, g);
    Eigen::VectorXd xbar(16), lambda(16);
    for (int t = 0; t < 16; ++t) {
      xbar[t] = n(rng);
      lambda[t] = n(rng);
      agent.last_profile[t] = ev.availability[t] * std::abs(n(rng));
    }
    const double rho = 0.5, gamma = 2.0, k = 2.0 * gamma * ev.alpha + rho;
    const Eigen::VectorXd v = agent.last_profile - xbar - lambda / rho;
    const Schedule sch = ev_update(agent, xbar, lambda, cfg_for(rho, gamma, false));
    const Eigen::VectorXd ref = projected_gradient(ev, g, v, k, rho, 50);
    auto f = [&](const Eigen::VectorXd& x) { return 0.5 * k * x.squaredNorm() - rho * v.dot(x); };
    EXPECT_NEAR(f(sch.x), f(ref), 1e-6 * std::max(1.0, std::abs(f(ref)))) << "trial " << trial;
    EXPECT_LE((sch.x - ref).cwiseAbs().maxCoeff(), 1e-5) << "trial " << trial;
  }
}

TEST(EvUpdateProperty, LargeRhoAnchorsToProjection) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 5.0);
  const TimeGrid g{16, 4};
  for (int trial = 0; trial < 10; ++trial) {
    const EvSpec ev = random_charge_only_ev(rng);
    EvAgent agent(ev, g);
    Eigen::VectorXd xbar(16), lambda(16);
    for (int t = 0; t < 16; ++t) {
      xbar[t] = n(rng);
      lambda[t] = 1e6 * n(rng);
      agent.last_profile[t] = ev.availability[t] * std::abs(n(rng));
    }
    const double rho = 1e6;
    const Eigen::VectorXd v = agent.last_profile - xbar - lambda / rho;
    const Schedule sch = ev_update(agent, xbar, lambda, cfg_for(rho, 0.0, false));
    const Eigen::VectorXd proj = project_box_sum(
        v, ev.p_ch_max.cwiseProduct(ev.availability), ev.eta_ch / g.steps_per_hour,
        ev.required_energy - ev.initial_energy);
    EXPECT_LE((sch.x - proj).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
  }
}

TEST(EvaLvm, ClosedFormHandExample) {
  Scenario s;
  s.grid = TimeGrid{1, 1};
  s.demand = Eigen::VectorXd::Constant(1, 3.0);
  s.aggregator = make_aggregator(default_scenario_params().aggregator, s.grid,
                                 AggregatorObjective::kLoadVariance);
  const EvaAgent eva(s);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  EXPECT_NEAR(eva_lvm_update_closed_form(eva, zero, zero, 1.0, 1.0)[0], 2.0, 1e-15);
  EXPECT_NEAR(eva_lvm_update_closed_form(eva, zero, zero, 1.0, 1e12)[0], 3.0, 1e-9);
  EvaAgent at_fixed_point(s);
  at_fixed_point.last_profile = s.demand;
  EXPECT_NEAR(eva_lvm_update_closed_form(at_fixed_point, zero, zero, 0.7, 2.0)[0], 3.0, 1e-14);
}

TEST(EvaLvm, QpMatchesClosedFormAndClipsAtCaps) {
  const Scenario s = synth_scenario(3, 12, 1, 8);
  EvaAgent eva(s);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 20.0);
  Eigen::VectorXd xbar(12), lambda(12);
  for (int t = 0; t < 12; ++t) {
    xbar[t] = n(rng);
    lambda[t] = 1e-2 * n(rng);
    eva.last_profile[t] = n(rng);
  }
  const double rho = 1e-2, delta = 1e-3;
  const Eigen::VectorXd cf = eva_lvm_update_closed_form(eva, xbar, lambda, rho, delta);
  const Eigen::VectorXd qp = eva_lvm_update_qp(eva, xbar, lambda, rho, delta);
  EXPECT_LE((cf - qp).cwiseAbs().maxCoeff(), 1e-8);

  // A cap below one unconstrained value clips that step only.
  Eigen::Index arg;
  cf.maxCoeff(&arg);
  eva.spec.p_dis_max[arg] = cf[arg] - 1.0;
  const Eigen::VectorXd capped = eva_lvm_update_qp(eva, xbar, lambda, rho, delta, true);
  for (int t = 0; t < 12; ++t) {
    const double want = std::clamp(cf[t], -eva.spec.p_ch_max[t], eva.spec.p_dis_max[t]);
    EXPECT_NEAR(capped[t], want, 1e-7) << "t=" << t;
  }

  EvaAgent zero_demand(s);
  zero_demand.demand.setZero();
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(12);
  EXPECT_LE(eva_lvm_update_qp(zero_demand, z, z, rho, delta).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(EvaCcm, ZeroPricesReduceToClippedProximalPoint) {
  Scenario s = synth_scenario(2, 8, 1, 2, AggregatorObjective::kChargingCost);
  s.tariff.price_ch.setZero();
  s.tariff.price_dis.setZero();
  s.aggregator.p_ch_max.setConstant(5.0);
  s.aggregator.p_dis_max.setConstant(3.0);
  EvaAgent eva(s);
  Eigen::VectorXd xbar(8), lambda = Eigen::VectorXd::Zero(8);
  xbar << 7, -7, 2, -2, 0.5, -0.5, 4, -4;
  const double rho = 1.0;
  const Eigen::VectorXd x0 = eva_ccm_update(eva, xbar, lambda, rho, AdmmConfig{});
  for (int t = 0; t < 8; ++t) {
    // x_0 = p_dis_a - p_ch_a lies in [-p_ch_max, p_dis_max].
    EXPECT_NEAR(x0[t], std::clamp(-xbar[t], -5.0, 3.0), 1e-7) << "t=" << t;
  }
}

TEST(EvaCcm, NoArbitrageWithoutProximalPull) {
  Scenario s = synth_scenario(1, 1, 1, 2, AggregatorObjective::kChargingCost);
  s.tariff.price_ch.setConstant(0.38);
  s.tariff.price_dis.setZero();
  EvaAgent eva(s);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd x0 = eva_ccm_update(eva, z, z, 1e-3, AdmmConfig{});
  EXPECT_NEAR(x0[0], 0.0, 1e-9);
}

TEST(EvaCcm, OutputRespectsAggregateCaps) {
  const Scenario s = synth_scenario(3, 24, 1, 6, AggregatorObjective::kChargingCost);
  EvaAgent eva(s);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 400.0);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd xbar(24), lambda(24);
    for (int t = 0; t < 24; ++t) {
      xbar[t] = n(rng);
      lambda[t] = n(rng);
    }
    const Eigen::VectorXd x0 = eva_ccm_update(eva, xbar, lambda, 1.0, AdmmConfig{});
    for (int t = 0; t < 24; ++t) {
      EXPECT_LE(-x0[t], s.aggregator.p_ch_max[t] + 1e-9);
      EXPECT_LE(x0[t], s.aggregator.p_dis_max[t] + 1e-9);
    }
  }
}

}  // namespace
}  // namespace evadmm
