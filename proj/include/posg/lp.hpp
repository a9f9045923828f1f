#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "posg/common.hpp"

namespace posg {

/// maximize c.x  subject to  A x <= b,  E x == f,  x >= 0.
struct LpProblem {
  std::size_t num_vars = 0;
  std::vector<double> c;
  std::vector<std::vector<double>> A;
  std::vector<double> b;
  std::vector<std::vector<double>> E;
  std::vector<double> f;
};

struct LpSolution {
  double value = 0.0;
  std::vector<double> x;
};

/// Dense two-phase tableau simplex with Bland's rule. Small problems only;
/// every game solved here has at most a few hundred rows and columns.
class SimplexSolver {
 public:
  explicit SimplexSolver(const LpProblem& p) : p_(p) {
    if (p.c.size() != p.num_vars)
      throw LpError("objective length does not match variable count");
    if (p.A.size() != p.b.size() || p.E.size() != p.f.size())
      throw LpError("constraint matrix / rhs size mismatch");
  }

  LpSolution solve() {
    build_tableau();
    if (need_phase1_) {
      run_simplex(/*phase1=*/true);
      if (tab_.back().back() < -10 * eps_)
        throw LpError("infeasible linear program");
      drop_artificials();
    }
    load_objective();
    run_simplex(/*phase1=*/false);
    LpSolution sol;
    sol.x.assign(p_.num_vars, 0.0);
    for (std::size_t r = 0; r < rows_; ++r)
      if (basis_[r] < p_.num_vars) sol.x[basis_[r]] = tab_[r].back();
    sol.value = 0.0;
    for (std::size_t j = 0; j < p_.num_vars; ++j)
      sol.value += p_.c[j] * sol.x[j];
    return sol;
  }

 private:
  void build_tableau() {
    rows_ = p_.A.size() + p_.E.size();
    slack_begin_ = p_.num_vars;
    art_begin_ = slack_begin_ + p_.A.size();
    cols_ = art_begin_;  // artificials appended lazily below
    basis_.assign(rows_, SIZE_MAX);

    // Rows in standard form with nonnegative rhs.
    std::vector<std::vector<double>> body;
    std::vector<double> rhs;
    for (std::size_t i = 0; i < p_.A.size(); ++i) {
      if (p_.A[i].size() != p_.num_vars)
        throw LpError("inequality row length mismatch");
      std::vector<double> row(art_begin_, 0.0);
      for (std::size_t j = 0; j < p_.num_vars; ++j) row[j] = p_.A[i][j];
      row[slack_begin_ + i] = 1.0;
      double r = p_.b[i];
      if (r < 0.0) {
        for (double& v : row) v = -v;
        r = -r;
      }
      body.push_back(std::move(row));
      rhs.push_back(r);
    }
    for (std::size_t i = 0; i < p_.E.size(); ++i) {
      if (p_.E[i].size() != p_.num_vars)
        throw LpError("equality row length mismatch");
      std::vector<double> row(art_begin_, 0.0);
      for (std::size_t j = 0; j < p_.num_vars; ++j) row[j] = p_.E[i][j];
      double r = p_.f[i];
      if (r < 0.0) {
        for (double& v : row) v = -v;
        r = -r;
      }
      body.push_back(std::move(row));
      rhs.push_back(r);
    }

    // Pick an initial basis: a slack column with +1 where possible,
    // otherwise an artificial variable.
    std::vector<std::size_t> art_rows;
    for (std::size_t r = 0; r < rows_; ++r) {
      if (r < p_.A.size() && body[r][slack_begin_ + r] == 1.0) {
        basis_[r] = slack_begin_ + r;
      } else {
        art_rows.push_back(r);
      }
    }
    cols_ = art_begin_ + art_rows.size();
    need_phase1_ = !art_rows.empty();

    tab_.assign(rows_ + 1, std::vector<double>(cols_ + 1, 0.0));
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t j = 0; j < art_begin_; ++j) tab_[r][j] = body[r][j];
      tab_[r][cols_] = rhs[r];
    }
    for (std::size_t k = 0; k < art_rows.size(); ++k) {
      std::size_t r = art_rows[k];
      tab_[r][art_begin_ + k] = 1.0;
      basis_[r] = art_begin_ + k;
    }
    if (need_phase1_) {
      // Phase-1 objective: maximize -(sum of artificials), expressed in
      // terms of the current basis.
      auto& obj = tab_.back();
      for (std::size_t r : art_rows)
        for (std::size_t j = 0; j <= cols_; ++j) obj[j] += tab_[r][j];
      for (std::size_t k = 0; k < art_rows.size(); ++k)
        obj[art_begin_ + k] = 0.0;
      for (std::size_t j = 0; j <= cols_; ++j) obj[j] = -obj[j];
    }
  }

  void drop_artificials() {
    // Pivot any artificial still in the basis out of it (degenerate rows).
    for (std::size_t r = 0; r < rows_; ++r) {
      if (basis_[r] < art_begin_) continue;
      std::size_t enter = SIZE_MAX;
      for (std::size_t j = 0; j < art_begin_; ++j)
        if (std::abs(tab_[r][j]) > eps_) {
          enter = j;
          break;
        }
      if (enter == SIZE_MAX) {
        // Redundant row: zero it out and leave the artificial basic at 0.
        continue;
      }
      pivot(r, enter);
    }
    for (auto& row : tab_)
      for (std::size_t j = art_begin_; j < cols_; ++j) row[j] = 0.0;
    locked_cols_ = art_begin_;
  }

  void load_objective() {
    auto& obj = tab_.back();
    std::fill(obj.begin(), obj.end(), 0.0);
    for (std::size_t j = 0; j < p_.num_vars; ++j) obj[j] = -p_.c[j];
    // Express the objective in the current basis.
    for (std::size_t r = 0; r < rows_; ++r) {
      std::size_t bj = basis_[r];
      if (bj >= p_.num_vars || obj[bj] == 0.0) continue;
      double coef = obj[bj];
      for (std::size_t j = 0; j <= cols_; ++j) obj[j] -= coef * tab_[r][j];
    }
    if (locked_cols_ == 0) locked_cols_ = cols_;
  }

  /// Row leaving the basis if `enter` comes in: minimum ratio over rows with
  /// pivot element above `tol`; ties within 1e-9 broken by Bland (smallest
  /// basis index) when `bland`, by largest pivot magnitude otherwise.
  std::size_t pick_leave(std::size_t enter, double tol, bool bland) const {
    std::size_t leave = SIZE_MAX;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < rows_; ++r) {
      double a = tab_[r][enter];
      if (a <= tol) continue;
      double ratio = tab_[r][cols_] / a;
      if (ratio < best - 1e-9) {
        best = ratio;
        leave = r;
      } else if (ratio < best + 1e-9 && leave != SIZE_MAX) {
        bool better = bland ? basis_[r] < basis_[leave]
                            : a > tab_[leave][enter];
        if (better) leave = r;
      }
    }
    return leave;
  }

  void run_simplex(bool phase1) {
    std::size_t limit = locked_cols_ ? locked_cols_ : cols_;
    std::size_t max_iters = 50 * (rows_ + cols_ + 10);
    // Dantzig entering at first (fewer degenerate steps), Bland once the run
    // drags on (anti-cycling). Pivot elements below piv_tol_ are avoided so
    // one noise-level pivot cannot poison the whole tableau.
    std::size_t bland_after = 2 * (rows_ + cols_ + 10);
    for (std::size_t it = 0;; ++it) {
      if (it > max_iters)
        throw LpError("simplex iteration limit exceeded (cycling?)");
      auto& obj = tab_.back();
      // Artificials near zero: phase 1 is done, don't chase residual noise.
      if (phase1 && obj[cols_] > -eps_) return;
      bool bland = it > bland_after;
      std::size_t enter = SIZE_MAX;
      for (std::size_t j = 0; j < limit; ++j) {
        if (obj[j] >= -eps_) continue;
        if (enter == SIZE_MAX || (!bland && obj[j] < obj[enter])) enter = j;
        if (bland) break;
      }
      if (enter == SIZE_MAX) return;
      std::size_t leave = pick_leave(enter, piv_tol_, bland);
      if (leave == SIZE_MAX) leave = pick_leave(enter, eps_, bland);
      if (leave == SIZE_MAX) {
        if (phase1) throw LpError("phase-1 problem unbounded (internal)");
        throw LpError("unbounded linear program");
      }
      pivot(leave, enter);
    }
  }

  void pivot(std::size_t r, std::size_t j) {
    double piv = tab_[r][j];
    for (std::size_t k = 0; k <= cols_; ++k) tab_[r][k] /= piv;
    tab_[r][j] = 1.0;
    for (std::size_t i = 0; i <= rows_; ++i) {
      if (i == r) continue;
      double coef = tab_[i][j];
      if (coef == 0.0) continue;
      for (std::size_t k = 0; k <= cols_; ++k)
        tab_[i][k] -= coef * tab_[r][k];
      tab_[i][j] = 0.0;
    }
    basis_[r] = j;
  }

  const LpProblem& p_;
  std::vector<std::vector<double>> tab_;
  std::vector<std::size_t> basis_;
  std::size_t rows_ = 0, cols_ = 0, slack_begin_ = 0, art_begin_ = 0;
  std::size_t locked_cols_ = 0;
  bool need_phase1_ = false;
  double eps_ = numeric_config().lp_eps;
  double piv_tol_ = 1e-7;
};

inline LpSolution solve_lp(const LpProblem& p) {
  return SimplexSolver(p).solve();
}

}  // namespace posg
