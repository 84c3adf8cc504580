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

#include "evadmm/agents.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace evadmm {
namespace {

void check_length(const Eigen::VectorXd& v, int T, const char* what) {
  if (v.size() != T) {
    throw std::invalid_argument(std::string(what) + " must have length " + std::to_string(T));
  }
}

/// Adds the quadratic (k/2)*||P z||^2 - rho * v'(P z) + (rho/2)||v||^2 where
/// P z = sign * (z_a - z_b) on the first two blocks.
void add_net_power_objective(QpProblem& qp, const PowerLayout& L, double k, double rho,
                             const Eigen::VectorXd& v, double sign) {
  for (int t = 0; t < L.T; ++t) {
    const int a = L.p_ch(t), b = L.p_dis(t);
    qp.Q(a, a) += k;
    qp.Q(b, b) += k;
    qp.Q(a, b) -= k;
    qp.Q(b, a) -= k;
    qp.c[a] -= sign * rho * v[t];
    qp.c[b] += sign * rho * v[t];
  }
  qp.const0 += 0.5 * rho * v.squaredNorm();
}

/// Collects constraint rows and stores them in one allocation.
class RowSet {
 public:
  explicit RowSet(int n) : n_(n) {}
  void add(const Eigen::RowVectorXd& row, double rhs) {
    rows_.push_back(row);
    rhs_.push_back(rhs);
  }
  void assign(Eigen::MatrixXd& A, Eigen::VectorXd& b) const {
    A.resize(static_cast<Eigen::Index>(rows_.size()), n_);
    b.resize(static_cast<Eigen::Index>(rhs_.size()));
    for (size_t i = 0; i < rows_.size(); ++i) {
      A.row(static_cast<Eigen::Index>(i)) = rows_[i];
      b[static_cast<Eigen::Index>(i)] = rhs_[i];
    }
  }

 private:
  int n_;
  std::vector<Eigen::RowVectorXd> rows_;
  std::vector<double> rhs_;
};

void add_linking_rows(RowSet& rows, const PowerLayout& L, const Eigen::VectorXd& cap_ch,
                      const Eigen::VectorXd& cap_dis) {
  for (int t = 0; t < L.T; ++t) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(L.size());
    r[L.p_ch(t)] = 1.0;
    r[L.u_ch(t)] = -cap_ch[t];
    rows.add(r, 0.0);
    r.setZero();
    r[L.p_dis(t)] = 1.0;
    r[L.u_dis(t)] = -cap_dis[t];
    rows.add(r, 0.0);
  }
}

}  // namespace

EvAgent::EvAgent(EvSpec s, const TimeGrid& g)
    : spec(std::move(s)), grid(g), last_profile(Eigen::VectorXd::Zero(g.steps)) {}

EvaAgent::EvaAgent(const Scenario& s)
    : spec(s.aggregator),
      demand(s.demand),
      tariff(s.tariff),
      grid(s.grid),
      last_profile(Eigen::VectorXd::Zero(s.grid.steps)) {}

PowerLayout ev_layout(const EvSpec& ev, const TimeGrid& grid) {
  int first = -1, last = -1;
  for (int t = 0; t < grid.steps; ++t) {
    if (ev.availability.size() == grid.steps && ev.availability[t] > 0.0) {
      if (first < 0) first = t;
      last = t;
    }
  }
  if (first < 0) return PowerLayout{1, 0};
  return PowerLayout{last - first + 1, first};
}

MiqpProblem build_ev_feasible_set(const EvSpec& ev, const TimeGrid& grid, bool v2g,
                                  ConstraintModel model) {
  const double m = grid.steps_per_hour;
  const bool full = model == ConstraintModel::kFull;
  const double eta_ch = full ? ev.eta_ch : 1.0;
  const double eta_dis = full ? ev.eta_dis : 1.0;
  const PowerLayout L = ev_layout(ev, grid);
  const int W = L.T;
  MiqpProblem p;
  QpProblem& qp = p.base;
  qp = QpProblem(L.size());
  const Eigen::VectorXd cap_ch = ev.p_ch_max.segment(L.begin, W);
  const Eigen::VectorXd cap_dis = ev.p_dis_max.segment(L.begin, W);
  const Eigen::VectorXd avail = ev.availability.segment(L.begin, W);

  for (int t = 0; t < W; ++t) {
    qp.lb[L.p_ch(t)] = 0.0;
    qp.ub[L.p_ch(t)] = cap_ch[t];
    qp.lb[L.p_dis(t)] = 0.0;
    qp.ub[L.p_dis(t)] = v2g ? cap_dis[t] : 0.0;
    qp.lb[L.u_ch(t)] = 0.0;
    qp.ub[L.u_ch(t)] = 1.0;
    qp.lb[L.u_dis(t)] = 0.0;
    qp.ub[L.u_dis(t)] = v2g ? 1.0 : 0.0;
    if (!v2g) {
      // Only the charge gate remains; it can sit at the availability.
      qp.lb[L.u_ch(t)] = avail[t];
      qp.ub[L.u_ch(t)] = avail[t];
    }
  }

  // Net energy delivered to the battery up to and including step t. After
  // the last available step the level is fixed at R, and before the window
  // it is E0, both covered by the feasibility test.
  RowSet rows(L.size());
  Eigen::RowVectorXd cum = Eigen::RowVectorXd::Zero(L.size());
  for (int t = 0; t < W; ++t) {
    cum[L.p_ch(t)] = eta_ch / m;
    cum[L.p_dis(t)] = -1.0 / (eta_dis * m);
    if (full && t + 1 < W) {
      rows.add(cum, ev.energy_max[L.begin + t] - ev.initial_energy);
      rows.add(-cum, ev.initial_energy - ev.energy_min[L.begin + t]);
    }
  }
  qp.add_eq_row(cum, ev.required_energy - ev.initial_energy);

  if (v2g && !full) {
    // Continuous gates projected out: p_ch <= cap_ch u_ch, p_dis <= cap_dis
    // u_dis, u_ch + u_dis <= A_t is the same set of powers as
    // p_ch / cap_ch + p_dis / cap_dis <= A_t. The gates stay at zero.
    for (int t = 0; t < W; ++t) {
      qp.ub[L.u_ch(t)] = 0.0;
      qp.ub[L.u_dis(t)] = 0.0;
      if (!(cap_ch[t] > 0.0) && !(cap_dis[t] > 0.0)) continue;
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(L.size());
      if (cap_ch[t] > 0.0) r[L.p_ch(t)] = 1.0 / cap_ch[t];
      if (cap_dis[t] > 0.0) r[L.p_dis(t)] = 1.0 / cap_dis[t];
      rows.add(r, avail[t]);
    }
  } else {
    add_linking_rows(rows, L, cap_ch, cap_dis);
  }
  if (v2g && full) {
    for (int t = 0; t < W; ++t) {
      p.binary_indices.push_back(L.u_ch(t));
      p.binary_indices.push_back(L.u_dis(t));
      p.pairing.push_back({L.u_ch(t), L.u_dis(t), avail[t]});
    }
  }
  rows.assign(qp.A_in, qp.b_in);
  return p;
}

MiqpProblem build_ev_subproblem(const EvAgent& agent, const Eigen::VectorXd& xbar,
                                const Eigen::VectorXd& lambda, double rho, double gamma,
                                bool v2g, ConstraintModel model) {
  const EvSpec& ev = agent.spec;
  const int T = agent.grid.steps;
  check_length(xbar, T, "xbar");
  check_length(lambda, T, "lambda");
  check_length(agent.last_profile, T, "last_profile");
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be > 0");
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  const Feasibility feas = feasibility_check(ev, agent.grid, v2g, model);
  if (!feas.feasible) throw InfeasibleScenario(ev.id, feas.reason);

  MiqpProblem p = build_ev_feasible_set(ev, agent.grid, v2g, model);
  const PowerLayout L = ev_layout(ev, agent.grid);
  // Steps outside the window carry x = 0 and only add the constant
  // (rho/2) v_t^2, which add_net_power_objective covers for the window.
  const Eigen::VectorXd v_full = agent.last_profile - xbar - lambda / rho;
  const Eigen::VectorXd v = v_full.segment(L.begin, L.T);
  add_net_power_objective(p.base, L, 2.0 * gamma * ev.alpha + rho, rho, v, 1.0);
  p.base.const0 += 0.5 * rho * (v_full.squaredNorm() - v.squaredNorm());
  return p;
}

Schedule extract_schedule(const EvSpec& ev, const TimeGrid& grid, const Eigen::VectorXd& z,
                          ConstraintModel model) {
  const int T = grid.steps;
  const PowerLayout L = ev_layout(ev, grid);
  if (z.size() != L.size()) throw std::invalid_argument("extract_schedule: size mismatch");
  Schedule s;
  s.p_ch = Eigen::VectorXd::Zero(T);
  s.p_dis = Eigen::VectorXd::Zero(T);
  s.u_ch = Eigen::VectorXd::Zero(T);
  s.u_dis = Eigen::VectorXd::Zero(T);
  for (int j = 0; j < L.T; ++j) {
    const int t = L.begin + j;
    const double a = ev.availability[t];
    double uc = z[L.u_ch(j)] >= 0.5 ? 1.0 : 0.0;
    double ud = z[L.u_dis(j)] >= 0.5 ? 1.0 : 0.0;
    double pc = std::clamp(z[L.p_ch(j)], 0.0, ev.p_ch_max[t]);
    double pd = std::clamp(z[L.p_dis(j)], 0.0, ev.p_dis_max[t]);
    if (model == ConstraintModel::kRelaxed) {
      // Lossless flows in both directions are interchangeable with their net.
      const double net = pc - pd;
      pc = std::max(net, 0.0);
      pd = std::max(-net, 0.0);
      uc = pc > 0.0 ? 1.0 : 0.0;
      ud = pd > 0.0 ? 1.0 : 0.0;
    }
    if (a == 0.0) {
      uc = ud = pc = pd = 0.0;
    }
    pc = std::min(pc, ev.p_ch_max[t] * uc);
    pd = std::min(pd, ev.p_dis_max[t] * ud);
    s.p_ch[t] = pc;
    s.p_dis[t] = pd;
    s.u_ch[t] = uc;
    s.u_dis[t] = ud;
  }
  s.x = s.p_ch - s.p_dis;
  s.energy = model == ConstraintModel::kFull ? energy_trajectory(ev, s.p_ch, s.p_dis, grid)
                                             : lossless_energy_trajectory(ev, s.p_ch, s.p_dis, grid);
  return s;
}

Schedule ev_update(EvAgent& agent, const Eigen::VectorXd& xbar, const Eigen::VectorXd& lambda,
                   const AdmmConfig& cfg) {
  const MiqpProblem problem = build_ev_subproblem(agent, xbar, lambda, cfg.rho, cfg.gamma,
                                                  cfg.v2g_enabled, cfg.constraint_model);
  MiqpOptions opt;
  opt.gap = cfg.miqp_gap;
  opt.max_nodes = cfg.miqp_max_nodes;
  opt.qp_tol = cfg.qp_tol;
  opt.warm_start = agent.hint.empty() ? nullptr : &agent.hint;
  const MiqpSolution sol = solve_miqp(problem, opt);
  agent.last_nodes = sol.nodes_explored;
  if (sol.status == MiqpStatus::kInfeasible) {
    throw InfeasibleScenario(agent.spec.id, "local subproblem has no feasible schedule");
  }
  if (sol.status == MiqpStatus::kGapLimit) {
    ++agent.gap_limited_solves;
    if (sol.x.size() == 0) {
      throw std::runtime_error("EV " + std::to_string(agent.spec.id) +
                               ": node budget exhausted without a feasible schedule");
    }
  }
  agent.hint = sol.root_active;
  Schedule s = extract_schedule(agent.spec, agent.grid, sol.x, cfg.constraint_model);
  agent.last_profile = s.x;
  return s;
}

Eigen::VectorXd eva_lvm_update_closed_form(const EvaAgent& agent, const Eigen::VectorXd& xbar,
                                           const Eigen::VectorXd& lambda, double rho,
                                           double delta) {
  const int T = agent.grid.steps;
  check_length(xbar, T, "xbar");
  check_length(lambda, T, "lambda");
  const double w_prox = rho / (rho + 2.0 * delta);
  const double w_dem = 2.0 * delta / (rho + 2.0 * delta);
  return w_prox * (agent.last_profile - xbar - lambda / rho) + w_dem * agent.demand;
}

Eigen::VectorXd eva_lvm_update_qp(const EvaAgent& agent, const Eigen::VectorXd& xbar,
                                  const Eigen::VectorXd& lambda, double rho, double delta,
                                  bool apply_caps, double qp_tol) {
  const int T = agent.grid.steps;
  check_length(xbar, T, "xbar");
  check_length(lambda, T, "lambda");
  const Eigen::VectorXd w = agent.last_profile - xbar - lambda / rho;
  QpProblem qp(T);
  qp.Q.diagonal().setConstant(2.0 * delta + rho);
  qp.c = -2.0 * delta * agent.demand - rho * w;
  qp.const0 = delta * agent.demand.squaredNorm() + 0.5 * rho * w.squaredNorm();
  if (apply_caps) {
    qp.lb = -agent.spec.p_ch_max;
    qp.ub = agent.spec.p_dis_max;
  }
  const QpSolution s = solve_qp(qp, qp_tol);
  if (s.status != QpStatus::kOptimal) {
    throw std::runtime_error("aggregator load-variance update failed: " + to_string(s.status));
  }
  return s.x;
}

MiqpProblem build_ccm_subproblem(const EvaAgent& agent, const Eigen::VectorXd& xbar,
                                 const Eigen::VectorXd& lambda, double rho) {
  const int T = agent.grid.steps;
  const double m = agent.grid.steps_per_hour;
  check_length(xbar, T, "xbar");
  check_length(lambda, T, "lambda");
  check_length(agent.tariff.price_ch, T, "tariff.price_ch");
  check_length(agent.tariff.price_dis, T, "tariff.price_dis");
  const PowerLayout L{T};
  MiqpProblem p;
  QpProblem& qp = p.base;
  qp = QpProblem(L.size());
  // x_0 = p_dis_a - p_ch_a, hence the negative sign on the net power.
  const Eigen::VectorXd w = agent.last_profile - xbar - lambda / rho;
  add_net_power_objective(qp, L, rho, rho, w, -1.0);
  for (int t = 0; t < T; ++t) {
    qp.c[L.p_ch(t)] += agent.tariff.price_ch[t] / m;
    qp.c[L.p_dis(t)] -= agent.tariff.price_dis[t] / m;
    qp.lb[L.p_ch(t)] = 0.0;
    qp.ub[L.p_ch(t)] = agent.spec.p_ch_max[t];
    qp.lb[L.p_dis(t)] = 0.0;
    qp.ub[L.p_dis(t)] = agent.spec.p_dis_max[t];
    qp.lb[L.u_ch(t)] = 0.0;
    qp.ub[L.u_ch(t)] = 1.0;
    qp.lb[L.u_dis(t)] = 0.0;
    qp.ub[L.u_dis(t)] = 1.0;
    p.binary_indices.push_back(L.u_ch(t));
    p.binary_indices.push_back(L.u_dis(t));
    p.pairing.push_back({L.u_ch(t), L.u_dis(t), 1.0});
  }
  RowSet rows(L.size());
  add_linking_rows(rows, L, agent.spec.p_ch_max, agent.spec.p_dis_max);
  rows.assign(qp.A_in, qp.b_in);
  return p;
}

Eigen::VectorXd eva_ccm_update(EvaAgent& agent, const Eigen::VectorXd& xbar,
                               const Eigen::VectorXd& lambda, double rho,
                               const AdmmConfig& cfg) {
  const MiqpProblem problem = build_ccm_subproblem(agent, xbar, lambda, rho);
  MiqpOptions opt;
  opt.gap = cfg.miqp_gap;
  opt.max_nodes = cfg.miqp_max_nodes;
  opt.qp_tol = cfg.qp_tol;
  opt.warm_start = agent.hint.empty() ? nullptr : &agent.hint;
  const MiqpSolution sol = solve_miqp(problem, opt);
  if (sol.status == MiqpStatus::kInfeasible || sol.x.size() == 0) {
    throw std::runtime_error("aggregator charging-cost update failed: " + to_string(sol.status));
  }
  if (sol.status == MiqpStatus::kGapLimit) ++agent.gap_limited_solves;
  agent.hint = sol.root_active;
  const int T = agent.grid.steps;
  const PowerLayout L{T};
  Eigen::VectorXd x0(T);
  for (int t = 0; t < T; ++t) {
    const double uc = sol.x[L.u_ch(t)], ud = sol.x[L.u_dis(t)];
    const double pc = std::clamp(sol.x[L.p_ch(t)], 0.0, agent.spec.p_ch_max[t] * uc);
    const double pd = std::clamp(sol.x[L.p_dis(t)], 0.0, agent.spec.p_dis_max[t] * ud);
    x0[t] = pd - pc;
  }
  agent.last_profile = x0;
  return x0;
}

Eigen::VectorXd eva_update(EvaAgent& agent, const Eigen::VectorXd& xbar,
                           const Eigen::VectorXd& lambda, const AdmmConfig& cfg) {
  if (agent.spec.objective == AggregatorObjective::kChargingCost) {
    return eva_ccm_update(agent, xbar, lambda, cfg.rho, cfg);
  }
  Eigen::VectorXd x0 =
      cfg.lvm_apply_caps
          ? eva_lvm_update_qp(agent, xbar, lambda, cfg.rho, agent.spec.delta, true, cfg.qp_tol)
          : eva_lvm_update_closed_form(agent, xbar, lambda, cfg.rho, agent.spec.delta);
  agent.last_profile = x0;
  return x0;
}

}  // namespace evadmm
