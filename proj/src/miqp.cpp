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

#include <algorithm>
#include <cmath>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <utility>

namespace evadmm {

std::string to_string(MiqpStatus status) {
  switch (status) {
    case MiqpStatus::kOptimal:
      return "optimal";
    case MiqpStatus::kInfeasible:
      return "infeasible";
    case MiqpStatus::kGapLimit:
      return "gap_limit";
  }
  return "unknown";
}

std::ostream& operator<<(std::ostream& out, MiqpStatus status) {
  return out << to_string(status);
}

void validate_miqp(const MiqpProblem& p) {
  const int n = p.base.num_vars();
  std::vector<char> is_binary(n, 0);
  for (int j : p.binary_indices) {
    if (j < 0 || j >= n) throw QpInputError("MiqpProblem: binary index out of range");
    if (p.base.lb.size() == n && (p.base.lb[j] < 0.0 || p.base.ub[j] > 1.0)) {
      throw QpInputError("MiqpProblem: binary bounds must lie in [0, 1]");
    }
    is_binary[j] = 1;
  }
  for (const auto& pair : p.pairing) {
    if (pair.charge < 0 || pair.charge >= n || pair.discharge < 0 ||
        pair.discharge >= n || !is_binary[pair.charge] || !is_binary[pair.discharge]) {
      throw QpInputError("MiqpProblem: pairing must refer to binary variables");
    }
    if (pair.available != 0.0 && pair.available != 1.0) {
      throw QpInputError("MiqpProblem: pairing availability must be 0 or 1");
    }
  }
}

QpProblem relaxation(const MiqpProblem& p) {
  QpProblem qp = p.base;
  const int n = qp.num_vars();
  const int m0 = qp.num_in();
  const int k = static_cast<int>(p.pairing.size());
  if (k == 0) return qp;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m0 + k, n);
  Eigen::VectorXd b(m0 + k);
  if (m0) {
    A.topRows(m0) = qp.A_in;
    b.head(m0) = qp.b_in;
  }
  for (int i = 0; i < k; ++i) {
    A(m0 + i, p.pairing[i].charge) = 1.0;
    A(m0 + i, p.pairing[i].discharge) = 1.0;
    b[m0 + i] = p.pairing[i].available;
  }
  qp.A_in = std::move(A);
  qp.b_in = std::move(b);
  return qp;
}

namespace {

struct Node {
  double bound;
  int id;
  Eigen::VectorXd lb, ub;
  Eigen::VectorXd x;
  ActiveSet active;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

double gap_tolerance(double incumbent, double gap) {
  return gap * std::max(1.0, std::abs(incumbent));
}

void round_binaries(const std::vector<int>& binaries, Eigen::VectorXd& x) {
  for (int j : binaries) x[j] = x[j] >= 0.5 ? 1.0 : 0.0;
}

}  // namespace

MiqpSolution solve_miqp(const MiqpProblem& problem, const MiqpOptions& options) {
  validate_miqp(problem);
  const QpProblem qp = relaxation(problem);
  validate_qp(qp, true);
  const std::vector<int>& bins = problem.binary_indices;

  QpOptions qopt;
  qopt.tol = options.qp_tol;
  qopt.trusted_input = true;

  MiqpSolution out;
  double incumbent = kInf;
  Eigen::VectorXd incumbent_x;

  // Solves the QP with every binary fixed to `values` (rounded).
  auto solve_fixed = [&](Eigen::VectorXd lb, Eigen::VectorXd ub, const Eigen::VectorXd& values,
                         const ActiveSet* hint) {
    for (int j : bins) {
      const double v = values[j] >= 0.5 ? 1.0 : 0.0;
      lb[j] = v;
      ub[j] = v;
    }
    QpOptions o = qopt;
    o.warm_start = hint;
    QpSolution s = solve_qp_with_bounds(qp, lb, ub, o);
    if (s.status == QpStatus::kOptimal && s.objective < incumbent) {
      incumbent = s.objective;
      incumbent_x = s.x;
      round_binaries(bins, incumbent_x);
    }
  };

  // Rounds every positive binary up, so that the linking rows p <= pmax*u stay
  // satisfied, then resolves pairing conflicts in favour of the larger value.
  auto heuristic = [&](const Node& node) {
    Eigen::VectorXd v = node.x;
    for (int j : bins) {
      if (node.lb[j] == node.ub[j]) v[j] = node.lb[j];
      else v[j] = node.x[j] > options.integrality_tol ? 1.0 : 0.0;
    }
    for (const auto& pair : problem.pairing) {
      if (v[pair.charge] + v[pair.discharge] <= pair.available) continue;
      const bool keep_charge = node.lb[pair.charge] == 1.0 ||
                               (node.lb[pair.discharge] != 1.0 &&
                                node.x[pair.charge] >= node.x[pair.discharge]);
      if (pair.available == 0.0) {
        v[pair.charge] = 0.0;
        v[pair.discharge] = 0.0;
      } else if (keep_charge) {
        v[pair.discharge] = 0.0;
      } else {
        v[pair.charge] = 0.0;
      }
    }
    solve_fixed(node.lb, node.ub, v, &node.active);
  };

  QpOptions root_opt = qopt;
  root_opt.warm_start = options.warm_start;
  const QpSolution root = solve_qp_with_bounds(qp, qp.lb, qp.ub, root_opt);
  out.nodes_explored = 1;
  if (root.status == QpStatus::kInfeasible) {
    out.status = MiqpStatus::kInfeasible;
    return out;
  }
  if (root.status != QpStatus::kOptimal) {
    throw std::runtime_error("solve_miqp: root relaxation failed (" +
                             to_string(root.status) + ")");
  }
  out.root_active = root.active;

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  int next_id = 0;
  open.push({root.objective, next_id++, qp.lb, qp.ub, root.x, root.active});
  heuristic(open.top());

  double open_bound = kInf;
  bool budget_hit = false;
  while (!open.empty()) {
    if (open.top().bound >= incumbent - gap_tolerance(incumbent, options.gap)) {
      open_bound = open.top().bound;
      break;
    }
    if (out.nodes_explored >= options.max_nodes) {
      budget_hit = true;
      open_bound = open.top().bound;
      break;
    }
    Node node = open.top();
    open.pop();

    int branch = -1;
    double most = options.integrality_tol;
    for (int j : bins) {
      if (node.lb[j] == node.ub[j]) continue;
      const double frac = std::min(node.x[j], 1.0 - node.x[j]);
      if (frac > most) {
        most = frac;
        branch = j;
      }
    }
    if (branch < 0) {
      solve_fixed(node.lb, node.ub, node.x, &node.active);
      continue;
    }
    if (!std::isfinite(incumbent)) heuristic(node);

    for (int side = 0; side < 2; ++side) {
      Eigen::VectorXd lb = node.lb, ub = node.ub;
      if (side == 0) ub[branch] = 0.0;
      else lb[branch] = 1.0;
      QpOptions o = qopt;
      o.warm_start = &node.active;
      const QpSolution s = solve_qp_with_bounds(qp, lb, ub, o);
      ++out.nodes_explored;
      if (s.status != QpStatus::kOptimal) continue;
      // Relaxation bounds can only grow with depth; guard against round-off.
      const double bound = std::max(s.objective, node.bound);
      if (bound >= incumbent - gap_tolerance(incumbent, options.gap)) continue;
      open.push({bound, next_id++, std::move(lb), std::move(ub), s.x, s.active});
    }
  }

  if (!std::isfinite(incumbent)) {
    out.status = budget_hit ? MiqpStatus::kGapLimit : MiqpStatus::kInfeasible;
    out.bound = budget_hit ? open_bound : kInf;
    return out;
  }
  out.x = incumbent_x;
  out.objective = incumbent;
  out.bound = std::min(incumbent, open_bound);
  out.gap = (incumbent - out.bound) / std::max(1.0, std::abs(incumbent));
  out.status = (budget_hit && out.gap > options.gap) ? MiqpStatus::kGapLimit
                                                     : MiqpStatus::kOptimal;
  return out;
}

MiqpSolution enumerate_binaries(const MiqpProblem& problem, int max_free, double qp_tol) {
  validate_miqp(problem);
  const QpProblem& base = problem.base;
  validate_qp(base, true);

  // One group per pair and per unpaired binary, each with its admissible
  // assignments in lexicographic order.
  struct Group {
    std::vector<int> vars;
    std::vector<std::vector<double>> options;
  };
  std::vector<Group> groups;
  std::vector<char> paired(base.num_vars(), 0);
  auto admissible = [&](int j, double v) { return v >= base.lb[j] && v <= base.ub[j]; };
  for (const auto& pair : problem.pairing) {
    paired[pair.charge] = paired[pair.discharge] = 1;
    Group g{{pair.charge, pair.discharge}, {}};
    const std::vector<std::vector<double>> all =
        pair.available == 0.0 ? std::vector<std::vector<double>>{{0, 0}}
                              : std::vector<std::vector<double>>{{0, 0}, {1, 0}, {0, 1}};
    for (const auto& o : all) {
      if (admissible(pair.charge, o[0]) && admissible(pair.discharge, o[1])) g.options.push_back(o);
    }
    groups.push_back(std::move(g));
  }
  for (int j : problem.binary_indices) {
    if (paired[j]) continue;
    paired[j] = 1;
    Group g{{j}, {}};
    for (double v : {0.0, 1.0}) {
      if (admissible(j, v)) g.options.push_back({v});
    }
    groups.push_back(std::move(g));
  }
  int free_groups = 0;
  for (const auto& g : groups) {
    if (g.options.empty()) {
      MiqpSolution out;
      out.status = MiqpStatus::kInfeasible;
      return out;
    }
    if (g.options.size() > 1) ++free_groups;
  }
  if (free_groups > max_free) {
    throw std::invalid_argument("enumerate_binaries: " + std::to_string(free_groups) +
                                " free binary groups exceed the cap of " +
                                std::to_string(max_free));
  }

  QpOptions qopt;
  qopt.tol = qp_tol;
  qopt.trusted_input = true;
  MiqpSolution best;
  ActiveSet hint;
  std::vector<size_t> choice(groups.size(), 0);
  Eigen::VectorXd lb = base.lb, ub = base.ub;
  while (true) {
    for (size_t g = 0; g < groups.size(); ++g) {
      const auto& opt = groups[g].options[choice[g]];
      for (size_t k = 0; k < groups[g].vars.size(); ++k) {
        lb[groups[g].vars[k]] = opt[k];
        ub[groups[g].vars[k]] = opt[k];
      }
    }
    qopt.warm_start = hint.empty() ? nullptr : &hint;
    const QpSolution s = solve_qp_with_bounds(base, lb, ub, qopt);
    ++best.nodes_explored;
    if (s.status == QpStatus::kOptimal) {
      hint = s.active;
      if (s.objective < best.objective) {
        best.objective = s.objective;
        best.x = s.x;
        round_binaries(problem.binary_indices, best.x);
      }
    }
    // Odometer with the first group most significant.
    int g = static_cast<int>(groups.size()) - 1;
    while (g >= 0 && ++choice[g] == groups[g].options.size()) {
      choice[g] = 0;
      --g;
    }
    if (g < 0) break;
  }
  if (std::isfinite(best.objective)) {
    best.status = MiqpStatus::kOptimal;
    best.bound = best.objective;
    best.gap = 0.0;
  }
  return best;
}

}  // namespace evadmm
