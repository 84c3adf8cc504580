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

#include "evadmm/oracle.hpp"

#include <stdexcept>

#include "evadmm/agents.hpp"
#include "evadmm/coordinator.hpp"

namespace evadmm {
namespace {

/// Copies `block` into `dst` with its columns shifted by `offset`.
void place_rows(Eigen::MatrixXd& dst, Eigen::VectorXd& rhs, const Eigen::MatrixXd& block,
                const Eigen::VectorXd& block_rhs, int offset) {
  const Eigen::Index r0 = dst.rows();
  Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(r0 + block.rows(), dst.cols());
  grown.topRows(r0) = dst;
  grown.block(r0, offset, block.rows(), block.cols()) = block;
  dst = std::move(grown);
  rhs.conservativeResize(r0 + block_rhs.size());
  rhs.tail(block_rhs.size()) = block_rhs;
}

}  // namespace

MiqpProblem build_central_problem(const Scenario& s, const AdmmConfig& cfg,
                                  std::vector<int>* offsets_out, bool convex_ccm) {
  const int T = s.grid.steps;
  const double m = s.grid.steps_per_hour;
  const bool ccm = s.aggregator.objective == AggregatorObjective::kChargingCost;
  const bool agg_block = ccm && !convex_ccm;

  std::vector<MiqpProblem> parts;
  std::vector<PowerLayout> layouts;
  std::vector<int> offsets;
  int n = 0;
  for (const auto& ev : s.evs) {
    parts.push_back(build_ev_feasible_set(ev, s.grid, cfg.v2g_enabled, cfg.constraint_model));
    layouts.push_back(ev_layout(ev, s.grid));
    offsets.push_back(n);
    n += parts.back().base.num_vars();
  }
  const int agg_offset = n;
  const PowerLayout A{T, 0};
  if (agg_block) n += A.size();

  MiqpProblem p;
  QpProblem& qp = p.base;
  qp = QpProblem(n);
  qp.A_eq.resize(0, n);
  qp.A_in.resize(0, n);
  for (size_t i = 0; i < parts.size(); ++i) {
    const QpProblem& b = parts[i].base;
    const int o = offsets[i];
    qp.lb.segment(o, b.num_vars()) = b.lb;
    qp.ub.segment(o, b.num_vars()) = b.ub;
    place_rows(qp.A_eq, qp.b_eq, b.A_eq, b.b_eq, o);
    place_rows(qp.A_in, qp.b_in, b.A_in, b.b_in, o);
    for (int j : parts[i].binary_indices) p.binary_indices.push_back(o + j);
    for (const auto& pr : parts[i].pairing) {
      p.pairing.push_back({o + pr.charge, o + pr.discharge, pr.available});
    }
  }

  // S z = x_a and P_i z = x_i.
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(T, n);
  for (size_t i = 0; i < parts.size(); ++i) {
    const PowerLayout& L = layouts[i];
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(T, n);
    for (int j = 0; j < L.T; ++j) {
      P(L.begin + j, offsets[i] + L.p_ch(j)) = 1.0;
      P(L.begin + j, offsets[i] + L.p_dis(j)) = -1.0;
    }
    S += P;
    qp.Q += 2.0 * cfg.gamma * s.evs[i].alpha * P.transpose() * P;
  }

  const AggregatorSpec& agg = s.aggregator;
  if (!ccm) {
    qp.Q += 2.0 * agg.delta * S.transpose() * S;
    qp.c += 2.0 * agg.delta * S.transpose() * s.demand;
    qp.const0 += agg.delta * s.demand.squaredNorm();
    if (cfg.lvm_apply_caps) {
      place_rows(qp.A_in, qp.b_in, S, agg.p_ch_max, 0);
      place_rows(qp.A_in, qp.b_in, -S, agg.p_dis_max, 0);
    }
  } else if (convex_ccm) {
    for (int t = 0; t < T; ++t) qp.c += (s.tariff.price_ch[t] / m) * S.row(t).transpose();
    place_rows(qp.A_in, qp.b_in, S, agg.p_ch_max, 0);
  } else {
    Eigen::MatrixXd tie = -S;
    for (int t = 0; t < T; ++t) {
      const int pc = agg_offset + A.p_ch(t), pd = agg_offset + A.p_dis(t);
      const int uc = agg_offset + A.u_ch(t), ud = agg_offset + A.u_dis(t);
      tie(t, pc) += 1.0;
      tie(t, pd) -= 1.0;
      qp.c[pc] += s.tariff.price_ch[t] / m;
      qp.c[pd] -= s.tariff.price_dis[t] / m;
      qp.lb[pc] = 0.0;
      qp.ub[pc] = agg.p_ch_max[t];
      qp.lb[pd] = 0.0;
      qp.ub[pd] = agg.p_dis_max[t];
      qp.lb[uc] = 0.0;
      qp.ub[uc] = 1.0;
      qp.lb[ud] = 0.0;
      qp.ub[ud] = 1.0;
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
      r[pc] = 1.0;
      r[uc] = -agg.p_ch_max[t];
      qp.add_in_row(r, 0.0);
      r.setZero();
      r[pd] = 1.0;
      r[ud] = -agg.p_dis_max[t];
      qp.add_in_row(r, 0.0);
      p.binary_indices.push_back(uc);
      p.binary_indices.push_back(ud);
      p.pairing.push_back({uc, ud, 1.0});
    }
    place_rows(qp.A_eq, qp.b_eq, tie, Eigen::VectorXd::Zero(T), 0);
  }
  if (offsets_out) *offsets_out = offsets;
  return p;
}

namespace {

void check_fleet(const Scenario& s, const AdmmConfig& cfg) {
  const auto violations = validate(s);
  if (!violations.empty()) throw ValidationError(violations);
  for (const auto& ev : s.evs) {
    const Feasibility f = feasibility_check(ev, s.grid, cfg.v2g_enabled, cfg.constraint_model);
    if (!f.feasible) throw InfeasibleScenario(ev.id, f.reason);
  }
}

CentralSolution assemble(const Scenario& s, const AdmmConfig& cfg, const Eigen::VectorXd& z,
                         const std::vector<int>& offsets, OracleMethod method) {
  CentralSolution out;
  out.method = method;
  out.x_a = Eigen::VectorXd::Zero(s.grid.steps);
  for (size_t i = 0; i < s.evs.size(); ++i) {
    const int size = ev_layout(s.evs[i], s.grid).size();
    out.schedules.push_back(
        extract_schedule(s.evs[i], s.grid, z.segment(offsets[i], size), cfg.constraint_model));
    out.x_a += out.schedules.back().x;
  }
  out.objective = system_objective(s, out.schedules, cfg.gamma);
  return out;
}

AdmmConfig config_for(const Scenario& s, double gamma, bool v2g) {
  AdmmConfig cfg = default_admm_config(s.aggregator.objective, s.grid);
  cfg.gamma = gamma;
  cfg.v2g_enabled = v2g;
  return cfg;
}

}  // namespace

CentralSolution solve_centralized_convex(const Scenario& s, const AdmmConfig& cfg) {
  if (cfg.v2g_enabled) {
    throw std::invalid_argument("solve_centralized_convex: requires v2g disabled");
  }
  check_fleet(s, cfg);
  std::vector<int> offsets;
  const MiqpProblem p = build_central_problem(s, cfg, &offsets, true);
  QpOptions opt;
  opt.tol = cfg.qp_tol;
  const QpSolution sol = solve_qp(relaxation(p), opt);
  if (sol.status == QpStatus::kInfeasible) {
    throw InfeasibleScenario(-1, "centralized problem is infeasible (aggregate caps)");
  }
  if (sol.status != QpStatus::kOptimal) {
    throw std::runtime_error("solve_centralized_convex: QP " + to_string(sol.status));
  }
  return assemble(s, cfg, sol.x, offsets, OracleMethod::kConvexQp);
}

CentralSolution solve_centralized_convex(const Scenario& s, double gamma) {
  return solve_centralized_convex(s, config_for(s, gamma, false));
}

CentralSolution solve_centralized_enumeration(const Scenario& s, const AdmmConfig& cfg,
                                              int cap) {
  check_fleet(s, cfg);
  std::vector<int> offsets;
  const MiqpProblem p = build_central_problem(s, cfg, &offsets, false);
  const MiqpSolution sol = enumerate_binaries(p, cap, cfg.qp_tol);
  if (sol.status != MiqpStatus::kOptimal) {
    throw InfeasibleScenario(-1, "no indicator assignment satisfies the coupled problem");
  }
  return assemble(s, cfg, sol.x, offsets, OracleMethod::kEnumeration);
}

CentralSolution solve_centralized_enumeration(const Scenario& s, double gamma, int cap) {
  return solve_centralized_enumeration(s, config_for(s, gamma, true), cap);
}

}  // namespace evadmm
