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

#include "evadmm/miqp.hpp"

#include <gtest/gtest.h>

#include "random_miqp.hpp"

namespace evadmm {
namespace {

/// One step: pull the net power toward `target` kW with 8 kW caps.
MiqpProblem single_step(double target, double available = 1.0) {
  MiqpProblem p;
  p.base = QpProblem(4);
  Eigen::RowVectorXd P(4);
  P << 1, -1, 0, 0;
  p.base.Q = 2.0 * P.transpose() * P;
  p.base.c = -2.0 * target * P.transpose();
  p.base.const0 = target * target;
  p.base.lb.setZero();
  p.base.ub << 8, 8, 1, 1;
  p.base.add_in_row((Eigen::RowVectorXd(4) << 1, 0, -8, 0).finished(), 0.0);
  p.base.add_in_row((Eigen::RowVectorXd(4) << 0, 1, 0, -8).finished(), 0.0);
  p.binary_indices = {2, 3};
  p.pairing = {{2, 3, available}};
  return p;
}

TEST(MiqpExamples, PullTowardChargeSelectsChargeMode) {
  const MiqpSolution s = solve_miqp(single_step(5.0));
  ASSERT_EQ(s.status, MiqpStatus::kOptimal);
  EXPECT_EQ(s.x[2], 1.0);
  EXPECT_EQ(s.x[3], 0.0);
  EXPECT_NEAR(s.x[0], 5.0, 1e-9);
  EXPECT_NEAR(s.x[1], 0.0, 1e-9);
  EXPECT_NEAR(s.objective, 0.0, 1e-9);
}

TEST(MiqpExamples, PullTowardDischargeSelectsDischargeMode) {
  const MiqpSolution s = solve_miqp(single_step(-3.0));
  ASSERT_EQ(s.status, MiqpStatus::kOptimal);
  EXPECT_EQ(s.x[2], 0.0);
  EXPECT_EQ(s.x[3], 1.0);
  EXPECT_NEAR(s.x[1], 3.0, 1e-9);
}

TEST(MiqpExamples, UnavailableStepForcesIdle) {
  const MiqpSolution s = solve_miqp(single_step(5.0, 0.0));
  ASSERT_EQ(s.status, MiqpStatus::kOptimal);
  EXPECT_EQ(s.x.segment(0, 4).cwiseAbs().maxCoeff(), 0.0);
  // Same as the QP with powers forced to zero.
  QpProblem q = single_step(5.0).base;
  q.ub.setZero();
  EXPECT_NEAR(s.objective, solve_qp(q).objective, 1e-12);
}

TEST(MiqpExamples, NoPairsMatchesQp) {
  MiqpProblem p;
  p.base = QpProblem(2);
  p.base.Q.setIdentity();
  p.base.c << -1, 2;
  p.base.lb.setConstant(-1);
  p.base.ub.setConstant(1);
  const MiqpSolution a = solve_miqp(p);
  const MiqpSolution b = enumerate_binaries(p);
  const QpSolution q = solve_qp(p.base);
  ASSERT_EQ(a.status, MiqpStatus::kOptimal);
  EXPECT_NEAR(a.objective, q.objective, 1e-12);
  EXPECT_NEAR(b.objective, q.objective, 1e-12);
}

TEST(MiqpExamples, InfeasibleRequirementBothPaths) {
  MiqpProblem p = single_step(5.0);
  // Energy that one 8 kW step at 0.9 efficiency cannot deliver.
  p.base.add_eq_row((Eigen::RowVectorXd(4) << 0.9, -1 / 0.88, 0, 0).finished(), 7.5);
  EXPECT_EQ(solve_miqp(p).status, MiqpStatus::kInfeasible);
  EXPECT_EQ(enumerate_binaries(p).status, MiqpStatus::kInfeasible);
}

TEST(MiqpExamples, EnumerationCapIsEnforced) {
  std::mt19937_64 rng(1);
  MiqpProblem p = testing::random_charge_miqp(rng, 5);
  for (auto& pair : p.pairing) pair.available = 1.0;
  EXPECT_THROW(enumerate_binaries(p, 4), std::invalid_argument);
  EXPECT_NO_THROW(enumerate_binaries(p, 5));
}

TEST(MiqpInput, RejectsBadPairing) {
  MiqpProblem p = single_step(1.0);
  p.pairing[0].charge = 0;  // continuous variable
  EXPECT_THROW(solve_miqp(p), QpInputError);
  p = single_step(1.0);
  p.base.ub[2] = 2.0;
  EXPECT_THROW(solve_miqp(p), QpInputError);
}

TEST(MiqpProperty, MatchesEnumeration) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const MiqpProblem p = testing::random_charge_miqp(rng, 1 + trial % 4);
    const MiqpSolution bb = solve_miqp(p);
    const MiqpSolution en = enumerate_binaries(p);
    ASSERT_EQ(bb.status == MiqpStatus::kInfeasible, en.status == MiqpStatus::kInfeasible)
        << trial;
    if (en.status == MiqpStatus::kInfeasible) continue;
    ASSERT_EQ(bb.status, MiqpStatus::kOptimal) << trial;
    EXPECT_NEAR(bb.objective, en.objective, 1e-6) << trial;
    EXPECT_LE(bb.gap, 1e-6);
    // Relaxation bound never exceeds the integral optimum.
    EXPECT_LE(solve_qp(relaxation(p)).objective, bb.objective + 1e-9);
  }
}

TEST(MiqpProperty, SolutionsAreIntegralAndComplementary) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 2 + trial % 5;
    const MiqpProblem p = testing::random_charge_miqp(rng, k);
    const MiqpSolution s = solve_miqp(p);
    if (s.status == MiqpStatus::kInfeasible) continue;
    ASSERT_EQ(s.status, MiqpStatus::kOptimal);
    for (int j : p.binary_indices) EXPECT_TRUE(s.x[j] == 0.0 || s.x[j] == 1.0);
    for (int t = 0; t < k; ++t) EXPECT_LE(s.x[4 * t] * s.x[4 * t + 1], 1e-12);
    EXPECT_LE(relaxation(p).max_violation(s.x), 1e-8);
  }
}

TEST(MiqpProperty, Deterministic) {
  std::mt19937_64 rng(5);
  const MiqpProblem p = testing::random_charge_miqp(rng, 4);
  const MiqpSolution a = solve_miqp(p);
  const MiqpSolution b = solve_miqp(p);
  EXPECT_EQ(a.nodes_explored, b.nodes_explored);
  EXPECT_EQ(a.x, b.x);
}

TEST(MiqpNodeBudget, ReportsGapLimit) {
  std::mt19937_64 rng(8);
  MiqpProblem p = testing::random_charge_miqp(rng, 8);
  MiqpOptions opt;
  opt.max_nodes = 1;
  const MiqpSolution s = solve_miqp(p, opt);
  EXPECT_TRUE(s.status == MiqpStatus::kGapLimit || s.status == MiqpStatus::kOptimal ||
              s.status == MiqpStatus::kInfeasible);
  if (s.status == MiqpStatus::kGapLimit) EXPECT_GT(s.gap, opt.gap);
}

}  // namespace
}  // namespace evadmm
