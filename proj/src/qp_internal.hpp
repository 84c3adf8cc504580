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

#include <string>
#include <utility>
#include <vector>

#include "evadmm/qp.hpp"

namespace evadmm::detail {

/// Problem left after presolve, in its own (compressed) indexing.
struct ReducedProblem {
  Eigen::MatrixXd Q;
  Eigen::VectorXd c;
  Eigen::MatrixXd E;  // equality rows
  Eigen::VectorXd f;
  Eigen::MatrixXd G;  // inequality rows
  Eigen::VectorXd h;
  Eigen::VectorXd lb, ub;
  std::vector<int> var_map;  // reduced variable -> original variable
  std::vector<int> eq_map;   // reduced equality row -> original row
  std::vector<int> in_map;   // reduced inequality row -> original row
};

/// Working set of the active-set phase: G rows held at equality and variables
/// fixed at a bound (-1 lower, +1 upper).
struct WorkingSet {
  std::vector<std::uint8_t> g_active;
  std::vector<std::int8_t> bound;
};

struct ReducedSolution {
  Eigen::VectorXd x, y, zG, zL, zU;
  std::vector<std::uint8_t> g_active;
  std::vector<std::int8_t> bound;
};

struct IpmResult {
  Eigen::VectorXd x, y, zG, sG, zL, zU, slackL, slackU;
  bool converged = false;
  int iterations = 0;
};

enum class OpKind {
  kFixBounds,    // lb == ub
  kEqSingleton,  // equality row with one free variable
  kForcingBegin, // inequality row tight at its minimum activity
  kForcingVar,   // variable fixed by the preceding forcing row
  kDropEq,       // empty equality row
  kDropIn,       // empty, singleton or redundant inequality row
};

struct Op {
  OpKind kind;
  int var;
  int row;
};

/// Removes fixed variables, singleton rows (turned into bounds), forcing and
/// redundant rows, and records what is needed to recover multipliers of the
/// original problem.
class Presolver {
 public:
  Presolver(const QpProblem& p, const Eigen::VectorXd& lb, const Eigen::VectorXd& ub);

  /// False when presolve proves infeasibility; see reason().
  bool run();
  /// Drops linearly dependent equality rows. False if they are inconsistent.
  bool drop_dependent_equalities(double tol);

  const ReducedProblem& reduced() const { return red_; }
  const std::string& reason() const { return reason_; }

  WorkingSet map_hint(const ActiveSet& hint) const;
  void postsolve(const ReducedSolution& rs, QpSolution& out) const;

 private:
  void fix(int j, double value, OpKind kind, int row);
  void build_reduced();

  const QpProblem& p_;
  int n_;
  Eigen::VectorXd lb_, ub_;
  std::vector<int> lb_src_, ub_src_;  // inequality row that set the bound, or -1
  std::vector<std::uint8_t> fixed_;
  Eigen::VectorXd xval_;
  Eigen::VectorXd b_eq_, b_in_;
  std::vector<std::uint8_t> eq_alive_, in_alive_;
  std::vector<std::vector<std::pair<int, double>>> eq_rows_, in_rows_;
  std::vector<std::vector<std::pair<int, double>>> eq_cols_, in_cols_;
  std::vector<Op> ops_;
  ReducedProblem red_;
  std::string reason_;
};

bool active_set_solve(const ReducedProblem& R, WorkingSet W, int max_iter,
                      ReducedSolution& out, int* iterations);
IpmResult interior_point(const ReducedProblem& R, double tol, int max_iter);
WorkingSet working_set_from_ipm(const IpmResult& r);
double phase_one(const ReducedProblem& R, Eigen::VectorXd& y_eq, Eigen::VectorXd& y_in);

double kkt_residual_with_bounds(const QpProblem& p, const Eigen::VectorXd& lb,
                                const Eigen::VectorXd& ub, const QpSolution& s);

}  // namespace evadmm::detail
