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

#include "evadmm/coordinator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

namespace evadmm {

AdmmState AdmmState::zeros(int num_evs, int steps) {
  AdmmState s;
  s.x.assign(num_evs, Eigen::VectorXd::Zero(steps));
  s.x0 = Eigen::VectorXd::Zero(steps);
  s.xbar = Eigen::VectorXd::Zero(steps);
  s.lambda = Eigen::VectorXd::Zero(steps);
  return s;
}

Eigen::VectorXd compute_xbar(const Eigen::VectorXd& x0, const std::vector<Eigen::VectorXd>& x) {
  Eigen::VectorXd sum = x0;
  for (const auto& xi : x) {
    if (xi.size() != x0.size()) throw std::invalid_argument("compute_xbar: length mismatch");
    sum += xi;
  }
  return sum / static_cast<double>(x.size() + 1);
}

Eigen::VectorXd update_dual(const Eigen::VectorXd& lambda, double rho,
                            const Eigen::VectorXd& xbar) {
  if (lambda.size() != xbar.size()) throw std::invalid_argument("update_dual: length mismatch");
  return lambda + rho * xbar;
}

ResidualRecord residuals(const AdmmState& state, const AdmmState& prev, double rho,
                         int num_evs) {
  ResidualRecord rec;
  rec.k = state.k;
  rec.primal_norm = state.xbar.norm();
  double sq = 0.0;
  rec.agent_dual_norms.resize(num_evs);
  const Eigen::VectorXd dbar = prev.xbar - state.xbar;
  for (int i = 0; i < num_evs; ++i) {
    const double si = rho * (num_evs + 1) * (state.x[i] - prev.x[i] + dbar).norm();
    rec.agent_dual_norms[i] = si;
    sq += si * si;
  }
  rec.dual_norm = std::sqrt(sq);
  return rec;
}

double aggregator_cost(const Scenario& s, const Eigen::VectorXd& x_a) {
  if (s.aggregator.objective == AggregatorObjective::kLoadVariance) {
    return s.aggregator.delta * (s.demand + x_a).squaredNorm();
  }
  const double m = s.grid.steps_per_hour;
  double cost = 0.0;
  for (Eigen::Index t = 0; t < x_a.size(); ++t) {
    cost += (s.tariff.price_ch[t] * std::max(x_a[t], 0.0) -
             s.tariff.price_dis[t] * std::max(-x_a[t], 0.0)) /
            m;
  }
  return cost;
}

namespace {

Eigen::VectorXd aggregate(const std::vector<Schedule>& schedules, int T) {
  Eigen::VectorXd x_a = Eigen::VectorXd::Zero(T);
  for (const auto& s : schedules) x_a += s.x;
  return x_a;
}

double degradation(const Scenario& s, const std::vector<Schedule>& schedules) {
  double d = 0.0;
  for (size_t i = 0; i < schedules.size(); ++i) d += s.evs[i].alpha * schedules[i].x.squaredNorm();
  return d;
}

}  // namespace

double system_objective(const Scenario& s, const std::vector<Schedule>& schedules,
                        double gamma) {
  return aggregator_cost(s, aggregate(schedules, s.grid.steps)) +
         gamma * degradation(s, schedules);
}

Metrics metrics(const RunResult& r, const Scenario& s) {
  Metrics out;
  const Eigen::VectorXd total = s.demand + r.x_a;
  const double mean = total.mean();
  out.load_variance = (total.array() - mean).square().mean();
  Scenario cost_view = s;
  cost_view.aggregator.objective = AggregatorObjective::kChargingCost;
  out.charging_cost = aggregator_cost(cost_view, r.x_a);
  out.degradation_cost = degradation(s, r.schedules);
  out.peak_kw = total.maxCoeff();
  return out;
}

namespace {

// Runs body(i) for i in [0, n) on up to `threads` workers and rethrows the
// first exception.
template <typename F>
void parallel_for(int n, int threads, F&& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

RunResult run(const Scenario& scenario, const AdmmConfig& cfg,
              const IterationCallback& on_iteration) {
  const auto start = std::chrono::steady_clock::now();
  const auto violations = validate(scenario);
  if (!violations.empty()) throw ValidationError(violations);
  if (!(cfg.rho > 0.0) || !(cfg.eps_p > 0.0) || !(cfg.eps_d > 0.0) || cfg.max_iter < 1 ||
      !(cfg.gamma >= 0.0)) {
    throw ValidationError({"config: rho, eps_p, eps_d must be > 0, gamma >= 0, max_iter >= 1"});
  }
  for (const auto& ev : scenario.evs) {
    const Feasibility f = feasibility_check(ev, scenario.grid, cfg.v2g_enabled,
                                            cfg.constraint_model);
    if (!f.feasible) throw InfeasibleScenario(ev.id, f.reason);
  }

  const int T = scenario.grid.steps;
  const int N = static_cast<int>(scenario.evs.size());
  const int threads = cfg.num_threads > 0
                          ? cfg.num_threads
                          : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<EvAgent> evs;
  evs.reserve(N);
  for (const auto& ev : scenario.evs) evs.emplace_back(ev, scenario.grid);
  EvaAgent eva(scenario);

  AdmmState state = AdmmState::zeros(N, T);
  std::vector<Schedule> schedules(N);
  RunResult result;
  double best_score = kInf;
  RunResult best;

  for (int k = 1; k <= cfg.max_iter; ++k) {
    AdmmState next;
    next.k = k;
    next.x.resize(N);
    parallel_for(N, threads, [&](int i) {
      schedules[i] = ev_update(evs[i], state.xbar, state.lambda, cfg);
      next.x[i] = schedules[i].x;
    });
    const Eigen::VectorXd xbar_eva = cfg.update_mode == UpdateMode::kGaussSeidel
                                         ? compute_xbar(state.x0, next.x)
                                         : state.xbar;
    next.x0 = eva_update(eva, xbar_eva, state.lambda, cfg);
    next.xbar = compute_xbar(next.x0, next.x);
    next.lambda = update_dual(state.lambda, cfg.rho, next.xbar);

    const ResidualRecord rec = residuals(next, state, cfg.rho, N);
    result.history.push_back(rec);
    if (on_iteration) on_iteration(rec);
    state = std::move(next);

    const bool done = rec.primal_norm <= cfg.eps_p && rec.dual_norm <= cfg.eps_d;
    const double score = std::max(rec.primal_norm / cfg.eps_p, rec.dual_norm / cfg.eps_d);
    if (done || score < best_score) {
      best_score = score;
      best.schedules = schedules;
      best.x0 = state.x0;
      best.lambda = state.lambda;
      best.iterations = k;
    }
    result.iterations = k;
    if (done) {
      result.converged = true;
      break;
    }
  }

  if (result.converged) {
    result.schedules = std::move(schedules);
    result.x0 = state.x0;
    result.lambda = state.lambda;
  } else {
    result.schedules = std::move(best.schedules);
    result.x0 = best.x0;
    result.lambda = best.lambda;
  }
  result.x_a = aggregate(result.schedules, T);
  for (const auto& a : evs) result.gap_limited_solves += a.gap_limited_solves;
  result.gap_limited_solves += eva.gap_limited_solves;
  result.metrics = metrics(result, scenario);
  result.objective = system_objective(scenario, result.schedules, cfg.gamma);
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace evadmm
