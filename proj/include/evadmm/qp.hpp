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
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace evadmm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Dense convex quadratic program
///
///   minimize    0.5 x'Qx + c'x + const0
///   subject to  A_eq x  = b_eq
///               A_in x <= b_in
///               lb <= x <= ub        (entries may be -inf / +inf)
///
/// Q must be symmetric positive semidefinite.
struct QpProblem {
  Eigen::MatrixXd Q;
  Eigen::VectorXd c;
  double const0 = 0.0;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  QpProblem() = default;
  /// Zero objective, no rows, free variables.
  explicit QpProblem(int num_vars);

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_eq() const { return static_cast<int>(b_eq.size()); }
  int num_in() const { return static_cast<int>(b_in.size()); }

  double objective(const Eigen::VectorXd& x) const;
  /// Largest violation of any constraint at x (0 when feasible).
  double max_violation(const Eigen::VectorXd& x) const;

  void add_eq_row(const Eigen::RowVectorXd& row, double rhs);
  void add_in_row(const Eigen::RowVectorXd& row, double rhs);
};

enum class QpStatus { kOptimal, kInfeasible, kIterLimit };

std::string to_string(QpStatus status);
std::ostream& operator<<(std::ostream& out, QpStatus status);

/// Tight constraints at a solution; used to warm-start later solves of
/// problems with the same constraint layout.
struct ActiveSet {
  std::vector<std::uint8_t> rows;  // one flag per A_in row
  std::vector<std::int8_t> bounds;  // -1 at lb, +1 at ub, 0 neither

  bool empty() const { return rows.empty() && bounds.empty(); }
};

/// Solution plus KKT certificate. Multipliers follow the convention
///
///   Qx + c + A_eq' nu + A_in' mu - z_lb + z_ub = 0,  mu, z_lb, z_ub >= 0.
struct QpSolution {
  Eigen::VectorXd x;
  double objective = kInf;
  double kkt_residual = kInf;
  QpStatus status = QpStatus::kIterLimit;
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd in_multipliers;
  Eigen::VectorXd lb_multipliers;
  Eigen::VectorXd ub_multipliers;
  ActiveSet active;
  int iterations = 0;
  /// For kInfeasible from the phase-1 solve: weights y with y_in >= 0 such
  /// that the combination of constraint rows proves infeasibility. Empty when
  /// infeasibility was detected structurally (presolve or rank test).
  Eigen::VectorXd farkas_eq;
  Eigen::VectorXd farkas_in;
};

struct QpOptions {
  double tol = 1e-8;
  int max_iter = 200;
  /// Verify symmetry and positive semidefiniteness of Q before solving.
  bool check_convexity = true;
  /// Skip all input checks; for callers that validated the data already.
  bool trusted_input = false;
  /// Optional guess of the optimal active set.
  const ActiveSet* warm_start = nullptr;
};

/// Thrown when the problem data are inconsistent (dimensions, non-convex Q).
class QpInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Checks dimensions and, optionally, symmetry/PSD of Q. Throws QpInputError.
void validate_qp(const QpProblem& problem, bool check_convexity = true);

/// Solves the QP. The active-set phase starts from `warm_start` when given;
/// otherwise, or when it stalls, a primal-dual interior point method locates
/// the active set, which is then polished by an exact equality-constrained
/// solve. Deterministic for fixed inputs.
QpSolution solve_qp(const QpProblem& problem, const QpOptions& options = {});
QpSolution solve_qp(const QpProblem& problem, double tol);

/// Same as solve_qp but with the variable bounds replaced by (lb, ub). Used by
/// branch-and-bound to avoid copying the constraint matrices per node.
QpSolution solve_qp_with_bounds(const QpProblem& problem,
                                const Eigen::VectorXd& lb,
                                const Eigen::VectorXd& ub,
                                const QpOptions& options = {});

/// Worst of primal infeasibility, stationarity, dual sign and complementary
/// slackness for the given point and multipliers. The dual-side terms are
/// divided by max(1, max|Q_ij|, max|c_j|).
double kkt_residual(const QpProblem& problem, const QpSolution& solution);

}  // namespace evadmm
