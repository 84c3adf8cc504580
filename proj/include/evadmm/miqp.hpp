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

#include <iosfwd>
#include <string>
#include <vector>

#include "evadmm/qp.hpp"

namespace evadmm {

/// Two binaries that may not both be 1: u_charge + u_discharge <= available.
/// `available` is 0 or 1.
struct BinaryPair {
  int charge = -1;
  int discharge = -1;
  double available = 1.0;
};

/// Convex QP in which `binary_indices` must take values in {0, 1}. The
/// pairing rows are added by the solver and must not be part of `base`.
struct MiqpProblem {
  QpProblem base;
  std::vector<int> binary_indices;
  std::vector<BinaryPair> pairing;
};

enum class MiqpStatus { kOptimal, kInfeasible, kGapLimit };

std::string to_string(MiqpStatus status);
std::ostream& operator<<(std::ostream& out, MiqpStatus status);

struct MiqpOptions {
  /// Relative optimality gap, measured against max(1, |incumbent|).
  double gap = 1e-6;
  double integrality_tol = 1e-6;
  /// Node budget; exhausting it with an incumbent yields kGapLimit.
  int max_nodes = 5000;
  double qp_tol = 1e-8;
  /// Active set of the root relaxation from a previous, similar solve.
  const ActiveSet* warm_start = nullptr;
};

struct MiqpSolution {
  Eigen::VectorXd x;
  double objective = kInf;
  /// Best lower bound over open nodes when the search stopped.
  double bound = -kInf;
  double gap = kInf;
  int nodes_explored = 0;
  MiqpStatus status = MiqpStatus::kInfeasible;
  /// Active set of the root relaxation, reusable as a warm start.
  ActiveSet root_active;
};

/// Checks that binary indices are in range with bounds inside [0, 1] and that
/// pairing entries refer to binaries. Throws QpInputError.
void validate_miqp(const MiqpProblem& problem);

/// Copy of `problem.base` with the pairing rows appended.
QpProblem relaxation(const MiqpProblem& problem);

/// Best-first branch and bound on the continuous relaxation. Branches on the
/// most fractional binary (lowest index on ties), exploring the zero child
/// first. Deterministic.
MiqpSolution solve_miqp(const MiqpProblem& problem, const MiqpOptions& options = {});

/// Exhaustive search over all admissible binary assignments: three per
/// available pair, one per unavailable pair, two per unpaired binary. Each
/// assignment is solved as a QP and the first strict minimum in
/// lexicographic order is kept. Throws std::invalid_argument when more than
/// `max_free` pairs/binaries have a choice.
MiqpSolution enumerate_binaries(const MiqpProblem& problem, int max_free = 12,
                                double qp_tol = 1e-8);

}  // namespace evadmm
