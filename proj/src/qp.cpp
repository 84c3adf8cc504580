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

#include "evadmm/qp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <set>
#include <utility>

#include "qp_internal.hpp"

namespace evadmm {

QpProblem::QpProblem(int n)
    : Q(Eigen::MatrixXd::Zero(n, n)),
      c(Eigen::VectorXd::Zero(n)),
      A_eq(0, n),
      b_eq(0),
      A_in(0, n),
      b_in(0),
      lb(Eigen::VectorXd::Constant(n, -kInf)),
      ub(Eigen::VectorXd::Constant(n, kInf)) {}

double QpProblem::objective(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(Q * x) + c.dot(x) + const0;
}

double QpProblem::max_violation(const Eigen::VectorXd& x) const {
  double v = 0.0;
  if (num_eq() > 0) v = std::max(v, (A_eq * x - b_eq).cwiseAbs().maxCoeff());
  if (num_in() > 0) v = std::max(v, (A_in * x - b_in).maxCoeff());
  for (int j = 0; j < num_vars(); ++j) {
    v = std::max(v, lb[j] - x[j]);
    v = std::max(v, x[j] - ub[j]);
  }
  return v;
}

void QpProblem::add_eq_row(const Eigen::RowVectorXd& row, double rhs) {
  A_eq.conservativeResize(A_eq.rows() + 1, num_vars());
  A_eq.row(A_eq.rows() - 1) = row;
  b_eq.conservativeResize(b_eq.size() + 1);
  b_eq[b_eq.size() - 1] = rhs;
}

void QpProblem::add_in_row(const Eigen::RowVectorXd& row, double rhs) {
  A_in.conservativeResize(A_in.rows() + 1, num_vars());
  A_in.row(A_in.rows() - 1) = row;
  b_in.conservativeResize(b_in.size() + 1);
  b_in[b_in.size() - 1] = rhs;
}

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal:
      return "optimal";
    case QpStatus::kInfeasible:
      return "infeasible";
    case QpStatus::kIterLimit:
      return "iteration_limit";
  }
  return "unknown";
}

std::ostream& operator<<(std::ostream& out, QpStatus status) {
  return out << to_string(status);
}

void validate_qp(const QpProblem& p, bool check_convexity) {
  const int n = p.num_vars();
  auto fail = [](const std::string& what) { throw QpInputError("QpProblem: " + what); };
  if (p.Q.rows() != n || p.Q.cols() != n) fail("Q must be n x n");
  if (p.lb.size() != n || p.ub.size() != n) fail("bounds must have length n");
  if (p.A_eq.cols() != n && p.A_eq.rows() > 0) fail("A_eq must have n columns");
  if (p.A_in.cols() != n && p.A_in.rows() > 0) fail("A_in must have n columns");
  if (p.A_eq.rows() != p.b_eq.size()) fail("A_eq/b_eq row mismatch");
  if (p.A_in.rows() != p.b_in.size()) fail("A_in/b_in row mismatch");
  if (!p.Q.allFinite() || !p.c.allFinite()) fail("Q and c must be finite");
  if (!p.A_eq.allFinite() || !p.b_eq.allFinite()) fail("A_eq, b_eq must be finite");
  if (!p.A_in.allFinite() || !p.b_in.allFinite()) fail("A_in, b_in must be finite");
  for (int j = 0; j < n; ++j) {
    if (std::isnan(p.lb[j]) || std::isnan(p.ub[j])) fail("bounds must not be NaN");
  }
  if (!check_convexity || n == 0) return;
  const double scale = std::max(1.0, p.Q.cwiseAbs().maxCoeff());
  if ((p.Q - p.Q.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    fail("Q must be symmetric");
  }
  // Weak diagonal dominance with a nonnegative diagonal certifies PSD
  // without a factorization (Gershgorin).
  const Eigen::VectorXd off_sum =
      p.Q.cwiseAbs().rowwise().sum() - p.Q.diagonal().cwiseAbs();
  if ((p.Q.diagonal() - off_sum).minCoeff() >= -1e-9 * scale) return;
  // Q + eps*I admits a Cholesky factor iff Q is PSD up to eps.
  Eigen::MatrixXd shifted = p.Q;
  shifted.diagonal().array() += 1e-9 * scale;
  Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success) fail("Q must be positive semidefinite");
}

double kkt_residual(const QpProblem& p, const QpSolution& s) {
  return detail::kkt_residual_with_bounds(p, p.lb, p.ub, s);
}

namespace detail {
namespace {

constexpr double kFixTol = 1e-11;

double feas_tol(double b) { return 1e-9 * (1.0 + std::abs(b)); }

// Maximum step in (0, 1] keeping v + step * dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) step = std::min(step, -v[i] / dv[i]);
  }
  return step;
}

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace

double kkt_residual_with_bounds(const QpProblem& p, const Eigen::VectorXd& lb,
                                const Eigen::VectorXd& ub, const QpSolution& s) {
  const int n = p.num_vars();
  if (s.x.size() != n) return kInf;
  const Eigen::VectorXd& x = s.x;
  auto sized = [](const Eigen::VectorXd& v, Eigen::Index k) {
    return v.size() == k ? v : Eigen::VectorXd::Zero(k);
  };
  const Eigen::VectorXd nu = sized(s.eq_multipliers, p.num_eq());
  const Eigen::VectorXd mu = sized(s.in_multipliers, p.num_in());
  const Eigen::VectorXd zl = sized(s.lb_multipliers, n);
  const Eigen::VectorXd zu = sized(s.ub_multipliers, n);

  // Multipliers scale with the objective, so their residuals are measured
  // relative to it.
  const double sigma = std::max({1.0, n ? p.Q.cwiseAbs().maxCoeff() : 0.0, inf_norm(p.c)});
  Eigen::VectorXd stat = p.Q * x + p.c - zl + zu;
  if (p.num_eq() > 0) stat += p.A_eq.transpose() * nu;
  if (p.num_in() > 0) stat += p.A_in.transpose() * mu;
  double r = 0.0, d = inf_norm(stat);
  if (p.num_eq() > 0) r = std::max(r, inf_norm(p.A_eq * x - p.b_eq));
  if (p.num_in() > 0) {
    const Eigen::VectorXd slack = p.b_in - p.A_in * x;
    for (int i = 0; i < p.num_in(); ++i) {
      r = std::max(r, -slack[i]);
      d = std::max({d, -mu[i], std::abs(mu[i] * slack[i])});
    }
  }
  for (int j = 0; j < n; ++j) {
    r = std::max(r, std::max(lb[j] - x[j], x[j] - ub[j]));
    d = std::max(d, std::max(-zl[j], -zu[j]));
    d = std::max(d, std::isfinite(lb[j]) ? std::abs(zl[j] * (x[j] - lb[j])) : std::abs(zl[j]));
    d = std::max(d, std::isfinite(ub[j]) ? std::abs(zu[j] * (ub[j] - x[j])) : std::abs(zu[j]));
  }
  return std::max(r, d / sigma);
}

// ---------------------------------------------------------------------------
// Presolve

Presolver::Presolver(const QpProblem& p, const Eigen::VectorXd& lb,
                     const Eigen::VectorXd& ub)
    : p_(p),
      n_(p.num_vars()),
      lb_(lb),
      ub_(ub),
      lb_src_(n_, -1),
      ub_src_(n_, -1),
      fixed_(n_, 0),
      xval_(Eigen::VectorXd::Zero(n_)),
      b_eq_(p.b_eq),
      b_in_(p.b_in),
      eq_alive_(p.num_eq(), 1),
      in_alive_(p.num_in(), 1),
      eq_rows_(p.num_eq()),
      in_rows_(p.num_in()),
      eq_cols_(n_),
      in_cols_(n_) {
  // Column-major traversal; row lists still come out sorted by column.
  for (int j = 0; j < n_; ++j) {
    for (int r = 0; r < p.num_eq(); ++r) {
      const double a = p.A_eq(r, j);
      if (a != 0.0) {
        eq_rows_[r].push_back({j, a});
        eq_cols_[j].push_back({r, a});
      }
    }
    for (int r = 0; r < p.num_in(); ++r) {
      const double a = p.A_in(r, j);
      if (a != 0.0) {
        in_rows_[r].push_back({j, a});
        in_cols_[j].push_back({r, a});
      }
    }
  }
}

void Presolver::fix(int j, double value, OpKind kind, int row) {
  fixed_[j] = 1;
  xval_[j] = value;
  for (const auto& [r, a] : eq_cols_[j]) b_eq_[r] -= a * value;
  for (const auto& [r, a] : in_cols_[j]) b_in_[r] -= a * value;
  ops_.push_back({kind, j, row});
}

bool Presolver::run() {
  for (int j = 0; j < n_; ++j) {
    if (lb_[j] > ub_[j] + feas_tol(lb_[j])) {
      reason_ = "variable bounds cross";
      return false;
    }
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (int j = 0; j < n_; ++j) {
      if (fixed_[j]) continue;
      const double scale = std::max(
          {1.0, std::isfinite(lb_[j]) ? std::abs(lb_[j]) : 0.0,
           std::isfinite(ub_[j]) ? std::abs(ub_[j]) : 0.0});
      if (lb_[j] > ub_[j] + feas_tol(scale)) {
        reason_ = "bounds cross after tightening";
        return false;
      }
      if (std::isfinite(lb_[j]) && std::isfinite(ub_[j]) &&
          ub_[j] - lb_[j] <= kFixTol * scale) {
        fix(j, lb_[j], OpKind::kFixBounds, -1);
        changed = true;
      }
    }
    for (int r = 0; r < p_.num_eq(); ++r) {
      if (!eq_alive_[r]) continue;
      int count = 0, last = -1;
      double a_last = 0.0, lo = 0.0, hi = 0.0;
      for (const auto& [j, a] : eq_rows_[r]) {
        if (fixed_[j]) continue;
        ++count;
        last = j;
        a_last = a;
        lo += a > 0 ? a * lb_[j] : a * ub_[j];
        hi += a > 0 ? a * ub_[j] : a * lb_[j];
      }
      const double b = b_eq_[r];
      if (count == 0) {
        if (std::abs(b) > feas_tol(p_.b_eq[r])) {
          reason_ = "inconsistent equality row";
          return false;
        }
        eq_alive_[r] = 0;
        ops_.push_back({OpKind::kDropEq, -1, r});
        changed = true;
      } else if (count == 1) {
        const double v = b / a_last;
        if (v < lb_[last] - feas_tol(v) || v > ub_[last] + feas_tol(v)) {
          reason_ = "equality singleton outside bounds";
          return false;
        }
        eq_alive_[r] = 0;
        fix(last, std::clamp(v, lb_[last], ub_[last]), OpKind::kEqSingleton, r);
        changed = true;
      } else if (lo > b + feas_tol(b) || hi < b - feas_tol(b)) {
        reason_ = "equality row activity cannot reach right-hand side";
        return false;
      }
    }
    for (int r = 0; r < p_.num_in(); ++r) {
      if (!in_alive_[r]) continue;
      int count = 0, last = -1;
      double a_last = 0.0, lo = 0.0, hi = 0.0;
      for (const auto& [j, a] : in_rows_[r]) {
        if (fixed_[j]) continue;
        ++count;
        last = j;
        a_last = a;
        lo += a > 0 ? a * lb_[j] : a * ub_[j];
        hi += a > 0 ? a * ub_[j] : a * lb_[j];
      }
      const double b = b_in_[r];
      if (count == 0) {
        if (b < -feas_tol(p_.b_in[r])) {
          reason_ = "inconsistent inequality row";
          return false;
        }
        in_alive_[r] = 0;
        ops_.push_back({OpKind::kDropIn, -1, r});
        changed = true;
      } else if (count == 1) {
        const double v = b / a_last;
        in_alive_[r] = 0;
        ops_.push_back({OpKind::kDropIn, -1, r});
        if (a_last > 0 && v < ub_[last]) {
          ub_[last] = v;
          ub_src_[last] = r;
        } else if (a_last < 0 && v > lb_[last]) {
          lb_[last] = v;
          lb_src_[last] = r;
        }
        changed = true;
      } else if (lo > b + feas_tol(b)) {
        reason_ = "inequality row cannot be satisfied within bounds";
        return false;
      } else if (hi <= b + 1e-12 * (1.0 + std::abs(b))) {
        in_alive_[r] = 0;
        ops_.push_back({OpKind::kDropIn, -1, r});
        changed = true;
      } else if (std::isfinite(lo) && lo >= b - feas_tol(b)) {
        // Forcing row: every variable sits at the bound that minimises the
        // row activity.
        in_alive_[r] = 0;
        ops_.push_back({OpKind::kForcingBegin, -1, r});
        for (const auto& [j, a] : in_rows_[r]) {
          if (fixed_[j]) continue;
          fix(j, a > 0 ? lb_[j] : ub_[j], OpKind::kForcingVar, r);
        }
        changed = true;
      }
    }
  }
  build_reduced();
  return true;
}

void Presolver::build_reduced() {
  red_.var_map.clear();
  std::vector<int> pos(n_, -1);
  for (int j = 0; j < n_; ++j) {
    if (!fixed_[j]) {
      pos[j] = static_cast<int>(red_.var_map.size());
      red_.var_map.push_back(j);
    }
  }
  const int nr = static_cast<int>(red_.var_map.size());
  red_.eq_map.clear();
  red_.in_map.clear();
  for (int r = 0; r < p_.num_eq(); ++r) {
    if (eq_alive_[r]) red_.eq_map.push_back(r);
  }
  for (int r = 0; r < p_.num_in(); ++r) {
    if (in_alive_[r]) red_.in_map.push_back(r);
  }
  const int pe = static_cast<int>(red_.eq_map.size());
  const int pi = static_cast<int>(red_.in_map.size());

  red_.Q.resize(nr, nr);
  red_.c.resize(nr);
  red_.lb.resize(nr);
  red_.ub.resize(nr);
  // Contribution of the fixed variables to the gradient of the free ones.
  Eigen::VectorXd xf = Eigen::VectorXd::Zero(n_);
  for (int j = 0; j < n_; ++j) {
    if (fixed_[j]) xf[j] = xval_[j];
  }
  const Eigen::VectorXd qxf = p_.Q * xf;
  for (int a = 0; a < nr; ++a) {
    const int ja = red_.var_map[a];
    for (int b = 0; b < nr; ++b) red_.Q(a, b) = p_.Q(ja, red_.var_map[b]);
    red_.c[a] = p_.c[ja] + qxf[ja];
    red_.lb[a] = lb_[ja];
    red_.ub[a] = ub_[ja];
  }
  red_.E = Eigen::MatrixXd::Zero(pe, nr);
  red_.f.resize(pe);
  for (int i = 0; i < pe; ++i) {
    const int r = red_.eq_map[i];
    for (const auto& [j, a] : eq_rows_[r]) {
      if (pos[j] >= 0) red_.E(i, pos[j]) = a;
    }
    red_.f[i] = b_eq_[r];
  }
  red_.G = Eigen::MatrixXd::Zero(pi, nr);
  red_.h.resize(pi);
  for (int i = 0; i < pi; ++i) {
    const int r = red_.in_map[i];
    for (const auto& [j, a] : in_rows_[r]) {
      if (pos[j] >= 0) red_.G(i, pos[j]) = a;
    }
    red_.h[i] = b_in_[r];
  }
}

bool Presolver::drop_dependent_equalities(double tol) {
  const int pe = static_cast<int>(red_.E.rows());
  if (pe == 0) return true;
  const int nr = static_cast<int>(red_.E.cols());
  if (nr == 0) {
    if (inf_norm(red_.f) > tol * (1.0 + inf_norm(red_.f))) return false;
    red_.E.resize(0, 0);
    red_.f.resize(0);
    red_.eq_map.clear();
    return true;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(red_.E.transpose());
  qr.setThreshold(1e-10);
  const int rank = static_cast<int>(qr.rank());
  // Least-squares consistency of the equality system.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(red_.E, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  const Eigen::VectorXd xls = svd.solve(red_.f);
  const double resid = inf_norm(red_.E * xls - red_.f);
  if (resid > tol * (1.0 + inf_norm(red_.f))) return false;
  if (rank == pe) return true;
  std::vector<int> keep;
  for (int k = 0; k < rank; ++k) keep.push_back(qr.colsPermutation().indices()[k]);
  std::sort(keep.begin(), keep.end());
  Eigen::MatrixXd E(rank, nr);
  Eigen::VectorXd f(rank);
  std::vector<int> map;
  for (int k = 0; k < rank; ++k) {
    E.row(k) = red_.E.row(keep[k]);
    f[k] = red_.f[keep[k]];
    map.push_back(red_.eq_map[keep[k]]);
  }
  red_.E = std::move(E);
  red_.f = std::move(f);
  red_.eq_map = std::move(map);
  return true;
}

WorkingSet Presolver::map_hint(const ActiveSet& hint) const {
  WorkingSet w;
  const int nr = static_cast<int>(red_.var_map.size());
  w.g_active.assign(red_.in_map.size(), 0);
  w.bound.assign(nr, 0);
  const bool rows_ok = static_cast<int>(hint.rows.size()) == p_.num_in();
  const bool bounds_ok = static_cast<int>(hint.bounds.size()) == n_;
  if (rows_ok) {
    for (size_t i = 0; i < red_.in_map.size(); ++i) {
      w.g_active[i] = hint.rows[red_.in_map[i]];
    }
  }
  for (int a = 0; a < nr; ++a) {
    const int j = red_.var_map[a];
    const bool lo_finite = std::isfinite(red_.lb[a]);
    const bool hi_finite = std::isfinite(red_.ub[a]);
    bool at_lo = false, at_hi = false;
    if (bounds_ok) {
      at_lo = hint.bounds[j] < 0 && lb_src_[j] < 0;
      at_hi = hint.bounds[j] > 0 && ub_src_[j] < 0;
    }
    if (rows_ok) {
      at_lo = at_lo || (lb_src_[j] >= 0 && hint.rows[lb_src_[j]]);
      at_hi = at_hi || (ub_src_[j] >= 0 && hint.rows[ub_src_[j]]);
    }
    if (at_lo && lo_finite) {
      w.bound[a] = -1;
    } else if (at_hi && hi_finite) {
      w.bound[a] = 1;
    }
  }
  return w;
}

void Presolver::postsolve(const ReducedSolution& rs, QpSolution& out) const {
  const int n = n_;
  out.x = xval_;
  for (size_t a = 0; a < red_.var_map.size(); ++a) out.x[red_.var_map[a]] = rs.x[a];
  out.eq_multipliers = Eigen::VectorXd::Zero(p_.num_eq());
  out.in_multipliers = Eigen::VectorXd::Zero(p_.num_in());
  out.lb_multipliers = Eigen::VectorXd::Zero(n);
  out.ub_multipliers = Eigen::VectorXd::Zero(n);
  out.active.rows.assign(p_.num_in(), 0);
  out.active.bounds.assign(n, 0);

  Eigen::VectorXd& nu = out.eq_multipliers;
  Eigen::VectorXd& mu = out.in_multipliers;
  Eigen::VectorXd& zl = out.lb_multipliers;
  Eigen::VectorXd& zu = out.ub_multipliers;

  for (size_t i = 0; i < red_.eq_map.size(); ++i) nu[red_.eq_map[i]] = rs.y[i];
  for (size_t i = 0; i < red_.in_map.size(); ++i) {
    mu[red_.in_map[i]] = rs.zG[i];
    if (rs.g_active.size() == red_.in_map.size() && rs.g_active[i]) {
      out.active.rows[red_.in_map[i]] = 1;
    }
  }

  // Lower-side multiplier z of variable j goes to its bound or to the row
  // that tightened it.
  auto assign_lower = [&](int j, double z) {
    if (z == 0.0) return;
    const int r = lb_src_[j];
    if (r >= 0) {
      mu[r] += z / std::abs(p_.A_in(r, j));
      out.active.rows[r] = 1;
    } else {
      zl[j] += z;
      out.active.bounds[j] = -1;
    }
  };
  auto assign_upper = [&](int j, double z) {
    if (z == 0.0) return;
    const int r = ub_src_[j];
    if (r >= 0) {
      mu[r] += z / std::abs(p_.A_in(r, j));
      out.active.rows[r] = 1;
    } else {
      zu[j] += z;
      out.active.bounds[j] = 1;
    }
  };

  for (size_t a = 0; a < red_.var_map.size(); ++a) {
    const int j = red_.var_map[a];
    assign_lower(j, rs.zL[a]);
    assign_upper(j, rs.zU[a]);
    if (rs.bound.size() == red_.var_map.size()) {
      if (rs.bound[a] < 0) {
        if (lb_src_[j] >= 0) out.active.rows[lb_src_[j]] = 1;
        else out.active.bounds[j] = -1;
      } else if (rs.bound[a] > 0) {
        if (ub_src_[j] >= 0) out.active.rows[ub_src_[j]] = 1;
        else out.active.bounds[j] = 1;
      }
    }
  }

  // Partial gradient of the Lagrangian w.r.t. x_j with current multipliers.
  auto grad = [&](int j) {
    double g = p_.Q.row(j).dot(out.x) + p_.c[j];
    for (const auto& [r, a] : eq_cols_[j]) g += a * nu[r];
    for (const auto& [r, a] : in_cols_[j]) g += a * mu[r];
    return g - zl[j] + zu[j];
  };

  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const Op& op = *it;
    switch (op.kind) {
      case OpKind::kDropEq:
      case OpKind::kDropIn:
      case OpKind::kForcingVar:
        break;
      case OpKind::kFixBounds: {
        const double g = grad(op.var);
        if (g > 0) assign_lower(op.var, g);
        else if (g < 0) assign_upper(op.var, -g);
        break;
      }
      case OpKind::kEqSingleton: {
        const double g = grad(op.var);
        nu[op.row] -= g / p_.A_eq(op.row, op.var);
        break;
      }
      case OpKind::kForcingBegin: {
        // Variables fixed by this row are the kForcingVar ops that follow it
        // in forward order, i.e. the ones already passed in this reverse scan.
        std::vector<int> vars;
        for (auto jt = ops_.begin() + (ops_.rend() - it); jt != ops_.end(); ++jt) {
          if (jt->kind != OpKind::kForcingVar || jt->row != op.row) break;
          vars.push_back(jt->var);
        }
        double m_r = 0.0;
        std::vector<double> g(vars.size());
        for (size_t k = 0; k < vars.size(); ++k) {
          g[k] = grad(vars[k]);
          m_r = std::max(m_r, -g[k] / p_.A_in(op.row, vars[k]));
        }
        mu[op.row] += m_r;
        out.active.rows[op.row] = 1;
        for (size_t k = 0; k < vars.size(); ++k) {
          const double a = p_.A_in(op.row, vars[k]);
          const double resid = g[k] + a * m_r;
          if (a > 0) assign_lower(vars[k], std::max(0.0, resid));
          else assign_upper(vars[k], std::max(0.0, -resid));
        }
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Equality-constrained solve on a working set

namespace {

struct EqpResult {
  Eigen::VectorXd x, y, zW;  // zW: multipliers of active G rows (compressed)
  bool ok = false;
};

EqpResult solve_eqp(const ReducedProblem& R, const WorkingSet& W) {
  const int n = static_cast<int>(R.c.size());
  const int pe = static_cast<int>(R.f.size());
  std::vector<int> free_vars, active_rows;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    if (W.bound[j] < 0) x[j] = R.lb[j];
    else if (W.bound[j] > 0) x[j] = R.ub[j];
    else free_vars.push_back(j);
  }
  for (size_t i = 0; i < W.g_active.size(); ++i) {
    if (W.g_active[i]) active_rows.push_back(static_cast<int>(i));
  }
  const int nv = static_cast<int>(free_vars.size());
  const int ma = pe + static_cast<int>(active_rows.size());

  // The stationarity rows are divided by the objective scale sigma, which
  // keeps the regularised factorisation accurate when Q is large; the
  // multipliers in the solution are then divided by sigma as well.
  const double sigma =
      std::max({1.0, n ? R.Q.cwiseAbs().maxCoeff() : 0.0, inf_norm(R.c)});
  const Eigen::VectorXd qfull = R.Q * x + R.c;  // x holds fixed values only
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nv + ma, nv + ma);
  Eigen::VectorXd rhs(nv + ma);
  for (int a = 0; a < nv; ++a) {
    for (int b = 0; b < nv; ++b) K(a, b) = R.Q(free_vars[a], free_vars[b]) / sigma;
    rhs[a] = -qfull[free_vars[a]] / sigma;
  }
  for (int i = 0; i < ma; ++i) {
    const bool eq = i < pe;
    const auto row = eq ? R.E.row(i) : R.G.row(active_rows[i - pe]);
    double b = eq ? R.f[i] : R.h[active_rows[i - pe]];
    b -= row.dot(x);
    for (int a = 0; a < nv; ++a) {
      K(nv + i, a) = row[free_vars[a]];
      K(a, nv + i) = row[free_vars[a]];
    }
    rhs[nv + i] = b;
  }

  EqpResult res;
  Eigen::VectorXd sol = Eigen::VectorXd::Zero(nv + ma);
  if (nv + ma > 0) {
    const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
    const double reg = 1e-9 * scale;
    Eigen::MatrixXd Kreg = K;
    Kreg.diagonal().head(nv).array() += reg;
    Kreg.diagonal().tail(ma).array() -= reg;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Kreg);
    sol = lu.solve(rhs);
    const double target = 1e-11 * (1.0 + inf_norm(rhs)) * scale;
    double resid = inf_norm(rhs - K * sol);
    for (int it = 0; it < 30 && resid > target; ++it) {
      sol += lu.solve(rhs - K * sol);
      resid = inf_norm(rhs - K * sol);
    }
    if (!(resid <= 1e-8 * (1.0 + inf_norm(rhs)) * scale) || !sol.allFinite()) {
      return res;
    }
  }
  for (int a = 0; a < nv; ++a) x[free_vars[a]] = sol[a];
  res.x = x;
  res.y = sigma * sol.segment(nv, pe);
  res.zW = Eigen::VectorXd::Zero(R.h.size());
  for (size_t k = 0; k < active_rows.size(); ++k) {
    res.zW[active_rows[k]] = sigma * sol[nv + pe + static_cast<int>(k)];
  }
  res.ok = true;
  return res;
}

size_t hash_ws(const WorkingSet& W) {
  size_t h = 1469598103934665603ull;
  auto mix = [&](int v) { h = (h ^ static_cast<size_t>(v + 2)) * 1099511628211ull; };
  for (auto v : W.g_active) mix(v);
  for (auto v : W.bound) mix(v);
  return h;
}

}  // namespace

bool active_set_solve(const ReducedProblem& R, WorkingSet W, int max_iter,
                      ReducedSolution& out, int* iterations) {
  const int n = static_cast<int>(R.c.size());
  const int qi = static_cast<int>(R.h.size());
  const double dual_tol = 1e-9 * (1.0 + inf_norm(R.c) + (n ? R.Q.cwiseAbs().maxCoeff() : 0.0));
  std::set<size_t> seen;
  for (int it = 0; it < max_iter; ++it) {
    if (iterations) ++*iterations;
    if (!seen.insert(hash_ws(W)).second) return false;
    EqpResult e = solve_eqp(R, W);
    if (!e.ok) return false;

    Eigen::VectorXd g = R.Q * e.x + R.c;
    if (R.f.size()) g += R.E.transpose() * e.y;
    if (qi) g += R.G.transpose() * e.zW;

    bool changed = false;
    WorkingSet next = W;
    for (int i = 0; i < qi; ++i) {
      if (W.g_active[i]) {
        if (e.zW[i] < -dual_tol) {
          next.g_active[i] = 0;
          changed = true;
        }
      } else if (R.G.row(i).dot(e.x) - R.h[i] > feas_tol(R.h[i])) {
        next.g_active[i] = 1;
        changed = true;
      }
    }
    for (int j = 0; j < n; ++j) {
      if (W.bound[j] < 0) {
        if (g[j] < -dual_tol) {
          next.bound[j] = 0;
          changed = true;
        }
      } else if (W.bound[j] > 0) {
        if (-g[j] < -dual_tol) {
          next.bound[j] = 0;
          changed = true;
        }
      } else if (e.x[j] < R.lb[j] - feas_tol(R.lb[j])) {
        next.bound[j] = -1;
        changed = true;
      } else if (e.x[j] > R.ub[j] + feas_tol(R.ub[j])) {
        next.bound[j] = 1;
        changed = true;
      }
    }
    if (!changed) {
      out.x = e.x;
      for (int j = 0; j < n; ++j) {
        if (W.bound[j] == 0) out.x[j] = std::clamp(out.x[j], R.lb[j], R.ub[j]);
      }
      out.y = e.y;
      out.zG = e.zW.cwiseMax(0.0);
      out.zL = Eigen::VectorXd::Zero(n);
      out.zU = Eigen::VectorXd::Zero(n);
      for (int j = 0; j < n; ++j) {
        if (W.bound[j] < 0) out.zL[j] = std::max(0.0, g[j]);
        if (W.bound[j] > 0) out.zU[j] = std::max(0.0, -g[j]);
      }
      out.g_active = W.g_active;
      out.bound = W.bound;
      return true;
    }
    W = std::move(next);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Primal-dual interior point (Mehrotra predictor-corrector)

IpmResult interior_point(const ReducedProblem& R, double tol, int max_iter) {
  const int n = static_cast<int>(R.c.size());
  const int pe = static_cast<int>(R.f.size());
  const int q = static_cast<int>(R.h.size());
  std::vector<int> L, U;
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(R.lb[j])) L.push_back(j);
    if (std::isfinite(R.ub[j])) U.push_back(j);
  }
  const int nl = static_cast<int>(L.size());
  const int nu = static_cast<int>(U.size());
  const int mtot = q + nl + nu;

  IpmResult res;
  Eigen::VectorXd x(n);
  for (int j = 0; j < n; ++j) {
    const bool lo = std::isfinite(R.lb[j]), hi = std::isfinite(R.ub[j]);
    if (lo && hi) x[j] = 0.5 * (R.lb[j] + R.ub[j]);
    else if (lo) x[j] = R.lb[j] + 1.0;
    else if (hi) x[j] = R.ub[j] - 1.0;
    else x[j] = 0.0;
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(pe);
  Eigen::VectorXd sG(q), zG = Eigen::VectorXd::Ones(q);
  Eigen::VectorXd sL(nl), zL = Eigen::VectorXd::Ones(nl);
  Eigen::VectorXd sU(nu), zU = Eigen::VectorXd::Ones(nu);
  if (q) sG = (R.h - R.G * x).cwiseMax(1.0);
  for (int k = 0; k < nl; ++k) sL[k] = std::max(x[L[k]] - R.lb[L[k]], 1.0);
  for (int k = 0; k < nu; ++k) sU[k] = std::max(R.ub[U[k]] - x[U[k]], 1.0);

  // Iterate on the objective divided by sigma so that the unit starting
  // duals match its scale; multipliers are mapped back on return.
  const double sigma =
      std::max({1.0, n ? R.Q.cwiseAbs().maxCoeff() : 0.0, inf_norm(R.c)});
  const Eigen::MatrixXd Qs = R.Q / sigma;
  const Eigen::VectorXd cs = R.c / sigma;
  const double scale_c = 1.0 + inf_norm(cs);
  const double q_scale = std::max(1.0, n ? Qs.cwiseAbs().maxCoeff() : 0.0);
  const double scale_b = 1.0 + std::max(inf_norm(R.f), inf_norm(R.h));
  Eigen::MatrixXd H(n, n);
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::MatrixXd HinvEt;
  Eigen::LLT<Eigen::MatrixXd> schur;

  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    Eigen::VectorXd rd = Qs * x + cs;
    if (pe) rd += R.E.transpose() * y;
    if (q) rd += R.G.transpose() * zG;
    for (int k = 0; k < nl; ++k) rd[L[k]] -= zL[k];
    for (int k = 0; k < nu; ++k) rd[U[k]] += zU[k];
    const Eigen::VectorXd rp = pe ? Eigen::VectorXd(R.E * x - R.f) : Eigen::VectorXd(0);
    const Eigen::VectorXd rG = q ? Eigen::VectorXd(R.G * x + sG - R.h) : Eigen::VectorXd(0);
    Eigen::VectorXd rL(nl), rU(nu);
    for (int k = 0; k < nl; ++k) rL[k] = R.lb[L[k]] + sL[k] - x[L[k]];
    for (int k = 0; k < nu; ++k) rU[k] = x[U[k]] + sU[k] - R.ub[U[k]];
    const double mu = mtot ? (sG.dot(zG) + sL.dot(zL) + sU.dot(zU)) / mtot : 0.0;

    const double pres = std::max({inf_norm(rp), inf_norm(rG), inf_norm(rL), inf_norm(rU)});
    const double dres = inf_norm(rd);
    if (pres <= tol * scale_b && dres <= tol * scale_c && mu <= tol * scale_c) {
      res.converged = true;
      break;
    }
    // Complementarity has collapsed but the residuals have stalled at a
    // level the active-set polish can finish from.
    if (mtot > 0 && mu <= 1e-14 * scale_c) {
      res.converged = pres <= 1e-6 * scale_b && dres <= 1e-6 * scale_c;
      break;
    }
    if (!x.allFinite() || inf_norm(x) > 1e12 || mu > 1e25) break;

    H = Qs;
    if (q) {
      const Eigen::VectorXd w = zG.cwiseQuotient(sG);
      H.noalias() += R.G.transpose() * w.asDiagonal() * R.G;
    }
    for (int k = 0; k < nl; ++k) H(L[k], L[k]) += zL[k] / sL[k];
    for (int k = 0; k < nu; ++k) H(U[k], U[k]) += zU[k] / sU[k];
    double reg = 1e-12 * q_scale;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::MatrixXd Hr = H;
      Hr.diagonal().array() += reg;
      llt.compute(Hr);
      if (llt.info() == Eigen::Success) break;
      reg *= 100.0;
    }
    if (llt.info() != Eigen::Success) break;
    if (pe) {
      HinvEt = llt.solve(R.E.transpose());
      Eigen::MatrixXd S = R.E * HinvEt;
      S.diagonal().array() += 1e-13 * std::max(1.0, S.diagonal().cwiseAbs().maxCoeff());
      schur.compute(S);
      if (schur.info() != Eigen::Success) break;
    }

    // Newton direction for complementarity targets (rsG, rsL, rsU).
    auto direction = [&](const Eigen::VectorXd& rsG, const Eigen::VectorXd& rsL,
                         const Eigen::VectorXd& rsU, Eigen::VectorXd& dx,
                         Eigen::VectorXd& dy, Eigen::VectorXd& dsG,
                         Eigen::VectorXd& dzG, Eigen::VectorXd& dsL,
                         Eigen::VectorXd& dzL, Eigen::VectorXd& dsU,
                         Eigen::VectorXd& dzU) {
      Eigen::VectorXd rhs = -rd;
      Eigen::VectorXd tG, tL, tU;
      if (q) {
        tG = (-rsG + zG.cwiseProduct(rG)).cwiseQuotient(sG);
        rhs -= R.G.transpose() * tG;
      }
      tL = (-rsL + zL.cwiseProduct(rL)).cwiseQuotient(sL);
      tU = (-rsU + zU.cwiseProduct(rU)).cwiseQuotient(sU);
      for (int k = 0; k < nl; ++k) rhs[L[k]] += tL[k];
      for (int k = 0; k < nu; ++k) rhs[U[k]] -= tU[k];
      const Eigen::VectorXd hr = llt.solve(rhs);
      if (pe) {
        dy = schur.solve(R.E * hr + rp);
        dx = hr - HinvEt * dy;
      } else {
        dy.resize(0);
        dx = hr;
      }
      if (q) {
        dsG = -rG - R.G * dx;
        dzG = tG + zG.cwiseQuotient(sG).cwiseProduct(R.G * dx);
      } else {
        dsG.resize(0);
        dzG.resize(0);
      }
      dsL.resize(nl);
      dzL.resize(nl);
      for (int k = 0; k < nl; ++k) {
        dsL[k] = -rL[k] + dx[L[k]];
        dzL[k] = tL[k] - zL[k] / sL[k] * dx[L[k]];
      }
      dsU.resize(nu);
      dzU.resize(nu);
      for (int k = 0; k < nu; ++k) {
        dsU[k] = -rU[k] - dx[U[k]];
        dzU[k] = tU[k] + zU[k] / sU[k] * dx[U[k]];
      }
    };

    Eigen::VectorXd dx, dy, dsG, dzG, dsL, dzL, dsU, dzU;
    direction(sG.cwiseProduct(zG), sL.cwiseProduct(zL), sU.cwiseProduct(zU), dx, dy,
              dsG, dzG, dsL, dzL, dsU, dzU);
    double a_aff = 1.0;
    a_aff = std::min({a_aff, max_step(sG, dsG), max_step(zG, dzG), max_step(sL, dsL),
                      max_step(zL, dzL), max_step(sU, dsU), max_step(zU, dzU)});
    double sigma = 0.0;
    if (mtot) {
      const double mu_aff = ((sG + a_aff * dsG).dot(zG + a_aff * dzG) +
                             (sL + a_aff * dsL).dot(zL + a_aff * dzL) +
                             (sU + a_aff * dsU).dot(zU + a_aff * dzU)) /
                            mtot;
      sigma = std::pow(std::max(mu_aff, 0.0) / std::max(mu, 1e-300), 3);
      sigma = std::min(sigma, 1.0);
      const Eigen::VectorXd cG =
          sG.cwiseProduct(zG) + dsG.cwiseProduct(dzG) - Eigen::VectorXd::Constant(q, sigma * mu);
      const Eigen::VectorXd cL =
          sL.cwiseProduct(zL) + dsL.cwiseProduct(dzL) - Eigen::VectorXd::Constant(nl, sigma * mu);
      const Eigen::VectorXd cU =
          sU.cwiseProduct(zU) + dsU.cwiseProduct(dzU) - Eigen::VectorXd::Constant(nu, sigma * mu);
      direction(cG, cL, cU, dx, dy, dsG, dzG, dsL, dzL, dsU, dzU);
    }
    double step = std::min({1.0, max_step(sG, dsG), max_step(zG, dzG), max_step(sL, dsL),
                            max_step(zL, dzL), max_step(sU, dsU), max_step(zU, dzU)});
    step = std::min(1.0, 0.995 * step);
    x += step * dx;
    y += step * dy;
    sG += step * dsG;
    zG += step * dzG;
    sL += step * dsL;
    zL += step * dzL;
    sU += step * dsU;
    zU += step * dzU;
  }

  y *= sigma;
  zG *= sigma;
  zL *= sigma;
  zU *= sigma;
  res.x = x;
  res.y = y;
  res.zG = zG;
  res.sG = sG;
  res.zL = Eigen::VectorXd::Zero(n);
  res.zU = Eigen::VectorXd::Zero(n);
  res.slackL = Eigen::VectorXd::Constant(n, kInf);
  res.slackU = Eigen::VectorXd::Constant(n, kInf);
  for (int k = 0; k < nl; ++k) {
    res.zL[L[k]] = zL[k];
    res.slackL[L[k]] = sL[k];
  }
  for (int k = 0; k < nu; ++k) {
    res.zU[U[k]] = zU[k];
    res.slackU[U[k]] = sU[k];
  }
  return res;
}

WorkingSet working_set_from_ipm(const IpmResult& r) {
  WorkingSet W;
  const Eigen::Index q = r.sG.size();
  W.g_active.assign(q, 0);
  for (Eigen::Index i = 0; i < q; ++i) W.g_active[i] = r.sG[i] < r.zG[i];
  const Eigen::Index n = r.x.size();
  W.bound.assign(n, 0);
  for (Eigen::Index j = 0; j < n; ++j) {
    const bool lo = r.slackL[j] < r.zL[j];
    const bool hi = r.slackU[j] < r.zU[j];
    if (lo && (!hi || r.slackL[j] <= r.slackU[j])) W.bound[j] = -1;
    else if (hi) W.bound[j] = 1;
  }
  return W;
}

// Elastic LP: minimise the total constraint violation. Returns the optimal
// violation and the row duals, which certify infeasibility when positive.
double phase_one(const ReducedProblem& R, Eigen::VectorXd& y_eq, Eigen::VectorXd& y_in) {
  const int n = static_cast<int>(R.c.size());
  const int pe = static_cast<int>(R.f.size());
  const int q = static_cast<int>(R.h.size());
  const int N = n + 2 * pe + q;
  ReducedProblem P;
  P.Q = Eigen::MatrixXd::Zero(N, N);
  P.c = Eigen::VectorXd::Zero(N);
  P.c.tail(2 * pe + q).setOnes();
  P.lb = Eigen::VectorXd::Zero(N);
  P.ub = Eigen::VectorXd::Constant(N, kInf);
  P.lb.head(n) = R.lb;
  P.ub.head(n) = R.ub;
  P.E = Eigen::MatrixXd::Zero(pe, N);
  P.f = R.f;
  if (pe) {
    P.E.leftCols(n) = R.E;
    P.E.block(0, n, pe, pe) = Eigen::MatrixXd::Identity(pe, pe);
    P.E.block(0, n + pe, pe, pe) = -Eigen::MatrixXd::Identity(pe, pe);
  }
  P.G = Eigen::MatrixXd::Zero(q, N);
  P.h = R.h;
  if (q) {
    P.G.leftCols(n) = R.G;
    P.G.block(0, n + 2 * pe, q, q) = -Eigen::MatrixXd::Identity(q, q);
  }
  IpmResult r = interior_point(P, 1e-10, 200);
  y_eq = r.y;
  y_in = r.zG;
  if (!r.converged && !r.x.allFinite()) return kInf;
  return P.c.dot(r.x);
}

}  // namespace detail

namespace {

QpSolution solve_impl(const QpProblem& p, const Eigen::VectorXd& lb,
                      const Eigen::VectorXd& ub, const QpOptions& opt) {
  using namespace detail;
  QpSolution sol;
  const int n = p.num_vars();

  Presolver pre(p, lb, ub);
  if (!pre.run() || !pre.drop_dependent_equalities(1e-9)) {
    sol.status = QpStatus::kInfeasible;
    sol.x = Eigen::VectorXd::Zero(n);
    return sol;
  }
  const ReducedProblem& R = pre.reduced();
  const int nr = static_cast<int>(R.c.size());

  ReducedSolution rs;
  bool solved = false;
  int iters = 0;
  if (nr == 0 && R.h.size() == 0 && R.f.size() == 0) {
    rs.x.resize(0);
    rs.y.resize(0);
    rs.zG.resize(0);
    rs.zL.resize(0);
    rs.zU.resize(0);
    solved = true;
  }
  if (!solved && opt.warm_start && !opt.warm_start->empty()) {
    solved = active_set_solve(R, pre.map_hint(*opt.warm_start), 30, rs, &iters);
  }
  bool ipm_failed = false;
  if (!solved) {
    IpmResult ipm = interior_point(R, 1e-10, opt.max_iter);
    iters += ipm.iterations;
    if (ipm.converged) {
      solved = active_set_solve(R, working_set_from_ipm(ipm), 15, rs, &iters);
      if (!solved) {
        rs.x = ipm.x.cwiseMax(R.lb).cwiseMin(R.ub);
        rs.y = ipm.y;
        rs.zG = ipm.zG;
        rs.zL = ipm.zL;
        rs.zU = ipm.zU;
        const WorkingSet W = working_set_from_ipm(ipm);
        rs.g_active = W.g_active;
        rs.bound = W.bound;
        solved = true;
      }
    } else {
      ipm_failed = true;
    }
  }
  sol.iterations = iters;

  if (ipm_failed) {
    Eigen::VectorXd y_eq, y_in;
    const double viol = phase_one(R, y_eq, y_in);
    const double scale = 1.0 + std::max(detail::inf_norm(R.f), detail::inf_norm(R.h));
    sol.x = Eigen::VectorXd::Zero(n);
    if (viol > 1e-7 * scale) {
      sol.status = QpStatus::kInfeasible;
      sol.farkas_eq = Eigen::VectorXd::Zero(p.num_eq());
      sol.farkas_in = Eigen::VectorXd::Zero(p.num_in());
      for (size_t i = 0; i < R.eq_map.size() && i < static_cast<size_t>(y_eq.size()); ++i) {
        sol.farkas_eq[R.eq_map[i]] = y_eq[i];
      }
      for (size_t i = 0; i < R.in_map.size() && i < static_cast<size_t>(y_in.size()); ++i) {
        sol.farkas_in[R.in_map[i]] = y_in[i];
      }
    } else {
      sol.status = QpStatus::kIterLimit;
    }
    return sol;
  }

  pre.postsolve(rs, sol);
  sol.objective = p.objective(sol.x);
  sol.kkt_residual = kkt_residual_with_bounds(p, lb, ub, sol);
  sol.status = sol.kkt_residual <= opt.tol ? QpStatus::kOptimal : QpStatus::kIterLimit;
  return sol;
}

}  // namespace

QpSolution solve_qp(const QpProblem& problem, const QpOptions& options) {
  if (!options.trusted_input) validate_qp(problem, options.check_convexity);
  return solve_impl(problem, problem.lb, problem.ub, options);
}

QpSolution solve_qp(const QpProblem& problem, double tol) {
  QpOptions opt;
  opt.tol = tol;
  return solve_qp(problem, opt);
}

QpSolution solve_qp_with_bounds(const QpProblem& problem, const Eigen::VectorXd& lb,
                                const Eigen::VectorXd& ub, const QpOptions& options) {
  if (!options.trusted_input) validate_qp(problem, options.check_convexity);
  if (lb.size() != problem.num_vars() || ub.size() != problem.num_vars()) {
    throw QpInputError("solve_qp_with_bounds: bound length mismatch");
  }
  return solve_impl(problem, lb, ub, options);
}

}  // namespace evadmm
