#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "posg/bounds.hpp"
#include "posg/lp.hpp"
#include "posg/occupancy.hpp"

namespace posg {

// ---------------------------------------------------------------------------
// Stage-game matrix
// ---------------------------------------------------------------------------

/// M^{sigma_tau}: rows indexed by (row-player AOH, row-player action) with
/// the AOH in the support of the row marginal, columns by the W-bound tuples
/// at this step. Entry = the bound on the row player's payoff-to-go if that
/// action is applied at that AOH while the column tuple is chosen, weighted
/// by the joint occupancy mass (so a full contraction with a decision rule
/// already yields an expectation over sigma).
struct GameMatrix {
  int tau = 0;
  bool is_upper = true;
  std::vector<std::pair<int, int>> rows;  // (aoh, action)
  std::map<std::pair<int, int>, std::size_t> row_index;
  std::vector<std::vector<double>> values;  // [row][col]

  std::size_t cols() const { return values.empty() ? 0 : values[0].size(); }
};

namespace detail {

inline const std::vector<double>& opp_row_or_uniform(
    const PosgModel& model, const DecisionRule& dr, int aoh, int player,
    std::vector<double>& scratch) {
  const auto* row = dr.find(aoh);
  if (row) return *row;
  scratch.assign(static_cast<size_t>(model.na(player)), 1.0 / model.na(player));
  return scratch;
}

/// Copy of `dr` with uniform rows added for the conditional's opponent AOHs
/// it does not cover. Tuples recorded on one trajectory are evaluated at
/// occupancies with different supports; off-support rules are uniform by
/// convention and never carry value.
inline DecisionRule complete_rule(const PosgModel& model,
                                  const DecisionRule& dr, int player,
                                  const Conditional& cond) {
  DecisionRule out = dr;
  std::vector<double> u(static_cast<size_t>(model.na(player)),
                        1.0 / model.na(player));
  for (const auto& [own, cells] : cond.rows)
    for (const auto& cell : cells)
      if (!out.find(cell.other)) out.probs[cell.other] = u;
  return out;
}

}  // namespace detail

inline GameMatrix build_matrix(const PosgModel& model, const BoundSets& sets,
                               bool is_upper, const OccupancyState& sigma) {
  const BoundSide& side = sets.side(is_upper);
  int tau = sigma.step;
  const auto& tuples = side.w.at(static_cast<size_t>(tau));
  if (tuples.empty()) throw DataError("empty W-bound set at this step");
  int rp = side.row_player;
  int op = 3 - rp;
  bool last = tau == model.horizon - 1;
  double lambda_next = last ? 0.0 : sets.lipschitz.at(tau + 1);
  double gamma = model.discount;
  double fallback = last ? 0.0 : nu_fallback(model, side, tau + 1);

  GameMatrix gm;
  gm.tau = tau;
  gm.is_upper = is_upper;
  for (int own : sigma.support(rp))
    for (int a = 0; a < model.na(rp); ++a) {
      gm.row_index[{own, a}] = gm.rows.size();
      gm.rows.emplace_back(own, a);
    }
  gm.values.assign(gm.rows.size(), std::vector<double>(tuples.size(), 0.0));

  Conditional sigma_cond = decompose(sigma, rp).second;

  std::vector<double> scratch;
  for (std::size_t w = 0; w < tuples.size(); ++w) {
    const WTuple& tup = tuples[w];
    // Row-wise distance between the conditionals induced from sigma's own
    // conditional and from the tuple's anchor, both driven by beta_opp[w].
    std::map<int, double> dist;
    if (!last && !tup.terminal) {
      DecisionRule dr_opp = detail::complete_rule(
          model, detail::complete_rule(model, tup.dr_opp, op, tup.anchor), op,
          sigma_cond);
      Conditional from_sigma =
          transition_conditional(model, sigma_cond, dr_opp);
      Conditional from_anchor =
          transition_conditional(model, tup.anchor, dr_opp);
      for (const auto& [own, cells] : from_sigma.rows) {
        const auto* anchor_row = from_anchor.row(own);
        dist[own] =
            anchor_row ? conditional_row_l1(cells, *anchor_row) : 2.0;
      }
    }
    for (const auto& e : sigma.entries) {
      int own = rp == 1 ? e.aoh1 : e.aoh2;
      int other = rp == 1 ? e.aoh2 : e.aoh1;
      const auto& opp_probs =
          detail::opp_row_or_uniform(model, tup.dr_opp, other, op, scratch);
      for (int aopp = 0; aopp < model.na(op); ++aopp) {
        if (opp_probs[aopp] == 0.0) continue;
        double mass = e.p * opp_probs[aopp];
        for (int arow = 0; arow < model.na(rp); ++arow) {
          int a1 = rp == 1 ? arow : aopp;
          int a2 = rp == 1 ? aopp : arow;
          double val = 0.0;
          for (int s = 0; s < model.ns(); ++s)
            val += e.belief[s] * model.r(s, a1, a2);
          if (!last && !tup.terminal) {
            for (int zrow = 0; zrow < model.nz(rp); ++zrow) {
              double omega = 0.0;
              for (int s = 0; s < model.ns(); ++s) {
                if (e.belief[s] == 0.0) continue;
                for (int s2 = 0; s2 < model.ns(); ++s2) {
                  for (int zopp = 0; zopp < model.nz(op); ++zopp) {
                    int z1 = rp == 1 ? zrow : zopp;
                    int z2 = rp == 1 ? zopp : zrow;
                    omega += e.belief[s] * model.prob(s, a1, a2, s2, z1, z2);
                  }
                }
              }
              if (omega == 0.0) continue;
              int child = aohs().child(own, arow, zrow);
              auto nit = tup.nu_next.find(child);
              double nu =
                  nit == tup.nu_next.end() ? fallback : nit->second;
              auto dit = dist.find(child);
              double d = dit == dist.end() ? 2.0 : dit->second;
              val += gamma * omega * (nu + side.sign * lambda_next * d);
            }
          }
          gm.values[gm.row_index[{own, arow}]][w] += mass * val;
        }
      }
    }
  }
  return gm;
}

// ---------------------------------------------------------------------------
// W-bound evaluation
// ---------------------------------------------------------------------------

/// Value of the W bound at (sigma, row-player rule): the min (upper) / max
/// (lower) over stored tuples of the rule's contraction with the matrix.
inline double bound_w_value(const PosgModel& model, const BoundSets& sets,
                            bool is_upper, const OccupancyState& sigma,
                            const DecisionRule& dr_row,
                            const GameMatrix* prebuilt = nullptr) {
  const BoundSide& side = sets.side(is_upper);
  GameMatrix local;
  const GameMatrix* gm = prebuilt;
  if (!gm) {
    local = build_matrix(model, sets, is_upper, sigma);
    gm = &local;
  }
  std::vector<double> scratch;
  double best = 0.0;
  bool first = true;
  for (std::size_t w = 0; w < gm->cols(); ++w) {
    double val = 0.0;
    for (std::size_t r = 0; r < gm->rows.size(); ++r) {
      auto [own, a] = gm->rows[r];
      const auto& probs = detail::opp_row_or_uniform(model, dr_row, own,
                                                     side.row_player, scratch);
      val += probs[a] * gm->values[r][w];
    }
    if (first || side.sign * val < side.sign * best) best = val;
    first = false;
  }
  return best;
}

inline double upper_w_value(const PosgModel& model, const BoundSets& sets,
                            const OccupancyState& sigma,
                            const DecisionRule& dr1) {
  return bound_w_value(model, sets, true, sigma, dr1);
}

inline double lower_w_value(const PosgModel& model, const BoundSets& sets,
                            const OccupancyState& sigma,
                            const DecisionRule& dr2) {
  return bound_w_value(model, sets, false, sigma, dr2);
}

// ---------------------------------------------------------------------------
// Primal / dual stage-game LPs
// ---------------------------------------------------------------------------

struct PrimalSolution {
  double value = 0.0;
  DecisionRule rule;
};

struct DualSolution {
  double value = 0.0;
  std::vector<double> mix;   // over tuple columns
  std::map<int, double> nu;  // row-player AOH -> backed-up value
};

namespace detail {

/// Row AOHs in order, with their marginal masses.
inline std::vector<std::pair<int, double>> row_thetas(const GameMatrix& gm,
                                                      const Marginal& m) {
  std::vector<std::pair<int, double>> out;
  for (const auto& [key, idx] : gm.row_index) {
    (void)idx;
    if (out.empty() || out.back().first != key.first)
      out.emplace_back(key.first, m.at(key.first));
  }
  return out;
}

}  // namespace detail

/// max_{beta, v} v  s.t.  v <= beta^T G_col for every column, rows of beta
/// per-AOH distributions. G = sign * M so one code path serves both sides.
inline PrimalSolution primal_solve(const PosgModel& model,
                                   const BoundSets& sets, bool is_upper,
                                   const GameMatrix& gm,
                                   const Marginal& marginal) {
  const BoundSide& side = sets.side(is_upper);
  auto thetas = detail::row_thetas(gm, marginal);
  std::size_t nb = gm.rows.size();
  // Variables: beta entries (one per matrix row), then v+ and v-.
  LpProblem lp;
  lp.num_vars = nb + 2;
  lp.c.assign(lp.num_vars, 0.0);
  lp.c[nb] = 1.0;
  lp.c[nb + 1] = -1.0;
  for (std::size_t w = 0; w < gm.cols(); ++w) {
    std::vector<double> row(lp.num_vars, 0.0);
    for (std::size_t r = 0; r < nb; ++r)
      row[r] = -side.sign * gm.values[r][w];
    row[nb] = 1.0;
    row[nb + 1] = -1.0;
    lp.A.push_back(std::move(row));
    lp.b.push_back(0.0);
  }
  for (const auto& [theta, mass] : thetas) {
    (void)mass;
    std::vector<double> row(lp.num_vars, 0.0);
    for (int a = 0; a < model.na(side.row_player); ++a)
      row[gm.row_index.at({theta, a})] = 1.0;
    lp.E.push_back(std::move(row));
    lp.f.push_back(1.0);
  }
  LpSolution sol = solve_lp(lp);

  PrimalSolution out;
  out.value = side.sign * (sol.x[nb] - sol.x[nb + 1]);
  out.rule.player = side.row_player;
  out.rule.step = gm.tau;
  for (const auto& [theta, mass] : thetas) {
    (void)mass;
    std::vector<double> probs(static_cast<size_t>(model.na(side.row_player)));
    double total = 0.0;
    for (int a = 0; a < model.na(side.row_player); ++a) {
      probs[static_cast<size_t>(a)] =
          std::max(0.0, sol.x[gm.row_index.at({theta, a})]);
      total += probs[static_cast<size_t>(a)];
    }
    for (double& p : probs) p /= total;
    out.rule.probs[theta] = std::move(probs);
  }
  return out;
}

/// min_{psi, mu} sum_theta mu_theta  s.t.  mu_theta >= G_row psi for every
/// row of theta, psi a distribution over columns; backed-up values
/// nu(theta) = sign * max_a (G_(theta,a) psi) / m(theta).
inline DualSolution dual_solve(const PosgModel& model, const BoundSets& sets,
                               bool is_upper, const GameMatrix& gm,
                               const Marginal& marginal) {
  const BoundSide& side = sets.side(is_upper);
  auto thetas = detail::row_thetas(gm, marginal);
  std::size_t nw = gm.cols();
  std::size_t nt = thetas.size();
  // Variables: psi (nw), then mu as mu+ - mu- per theta. Objective:
  // maximize -(sum mu) since the backend maximizes.
  LpProblem lp;
  lp.num_vars = nw + 2 * nt;
  lp.c.assign(lp.num_vars, 0.0);
  for (std::size_t t = 0; t < nt; ++t) {
    lp.c[nw + 2 * t] = -1.0;
    lp.c[nw + 2 * t + 1] = 1.0;
  }
  std::map<int, std::size_t> theta_pos;
  for (std::size_t t = 0; t < nt; ++t) theta_pos[thetas[t].first] = t;
  for (std::size_t r = 0; r < gm.rows.size(); ++r) {
    std::size_t t = theta_pos.at(gm.rows[r].first);
    std::vector<double> row(lp.num_vars, 0.0);
    for (std::size_t w = 0; w < nw; ++w)
      row[w] = side.sign * gm.values[r][w];
    row[nw + 2 * t] = -1.0;
    row[nw + 2 * t + 1] = 1.0;
    lp.A.push_back(std::move(row));
    lp.b.push_back(0.0);
  }
  {
    std::vector<double> row(lp.num_vars, 0.0);
    for (std::size_t w = 0; w < nw; ++w) row[w] = 1.0;
    lp.E.push_back(std::move(row));
    lp.f.push_back(1.0);
  }
  LpSolution sol = solve_lp(lp);

  DualSolution out;
  out.mix.assign(nw, 0.0);
  double total = 0.0;
  for (std::size_t w = 0; w < nw; ++w) {
    out.mix[w] = std::max(0.0, sol.x[w]);
    total += out.mix[w];
  }
  for (double& p : out.mix) p /= total;
  double obj = 0.0;
  for (std::size_t t = 0; t < nt; ++t)
    obj += sol.x[nw + 2 * t] - sol.x[nw + 2 * t + 1];
  out.value = side.sign * obj;

  double fallback = nu_fallback(model, side, gm.tau);
  for (const auto& [theta, mass] : thetas) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < model.na(side.row_player); ++a) {
      double dot = 0.0;
      std::size_t r = gm.row_index.at({theta, a});
      for (std::size_t w = 0; w < nw; ++w)
        dot += side.sign * gm.values[r][w] * out.mix[w];
      best = std::max(best, dot);
    }
    out.nu[theta] = mass > 0.0 ? side.sign * best / mass : fallback;
  }
  return out;
}

/// Wraps a dual solution as the column player's tree strategy at this step.
inline TreeStrategyPtr dual_to_tree(const BoundSets& sets, bool is_upper,
                                    const GameMatrix& gm,
                                    const DualSolution& dual) {
  const BoundSide& side = sets.side(is_upper);
  const auto& tuples = side.w.at(static_cast<size_t>(gm.tau));
  auto node = std::make_shared<TreeStrategy>();
  node->player = 3 - side.row_player;
  node->step = gm.tau;
  double total = 0.0;
  for (std::size_t w = 0; w < dual.mix.size(); ++w) {
    if (dual.mix[w] <= 0.0) continue;
    node->mix.push_back({dual.mix[w], tuples[w].dr_opp, tuples[w].psi_next});
    total += dual.mix[w];
  }
  for (auto& n : node->mix) n.weight /= total;
  return node;
}

// ---------------------------------------------------------------------------
// Exact terminal-stage game
// ---------------------------------------------------------------------------

struct TerminalSolution {
  DecisionRule dr1, dr2;
  double value = 0.0;
};

namespace detail {

/// One-shot Bayesian game LP for the maximizing player `p`: variables
/// beta(a|theta_p) and per-opponent-AOH values; payoff R already weighted by
/// the joint occupancy mass. Returns (rule, value to player p).
inline std::pair<DecisionRule, double> terminal_lp(const PosgModel& model,
                                                   const OccupancyState& sigma,
                                                   int p) {
  int o = 3 - p;
  std::vector<int> own_aohs = sigma.support(p);
  std::vector<int> opp_aohs = sigma.support(o);
  std::map<int, std::size_t> own_pos, opp_pos;
  for (std::size_t i = 0; i < own_aohs.size(); ++i) own_pos[own_aohs[i]] = i;
  for (std::size_t i = 0; i < opp_aohs.size(); ++i) opp_pos[opp_aohs[i]] = i;

  int na = model.na(p);
  std::size_t nb = own_aohs.size() * static_cast<size_t>(na);
  std::size_t nu = opp_aohs.size();
  auto bvar = [&](int theta, int a) {
    return own_pos.at(theta) * static_cast<size_t>(na) +
           static_cast<size_t>(a);
  };

  // Variables: beta entries, then u+ / u- per opponent AOH.
  LpProblem lp;
  lp.num_vars = nb + 2 * nu;
  lp.c.assign(lp.num_vars, 0.0);
  for (std::size_t t = 0; t < nu; ++t) {
    lp.c[nb + 2 * t] = 1.0;
    lp.c[nb + 2 * t + 1] = -1.0;
  }
  // u(theta_o) <= sum_{theta_p} sigma(theta) sum_a beta(a|theta_p) R(., a, b)
  // for every opponent action b; player p maximizes payoff sign_p * r.
  double sgn = p == 1 ? 1.0 : -1.0;
  for (std::size_t t = 0; t < nu; ++t) {
    for (int b = 0; b < model.na(o); ++b) {
      std::vector<double> row(lp.num_vars, 0.0);
      row[nb + 2 * t] = 1.0;
      row[nb + 2 * t + 1] = -1.0;
      for (const auto& e : sigma.entries) {
        int own = p == 1 ? e.aoh1 : e.aoh2;
        int opp = p == 1 ? e.aoh2 : e.aoh1;
        if (opp_pos.at(opp) != t) continue;
        for (int a = 0; a < na; ++a) {
          int a1 = p == 1 ? a : b;
          int a2 = p == 1 ? b : a;
          double er = 0.0;
          for (int s = 0; s < model.ns(); ++s)
            er += e.belief[s] * model.r(s, a1, a2);
          row[bvar(own, a)] -= sgn * e.p * er;
        }
      }
      lp.A.push_back(std::move(row));
      lp.b.push_back(0.0);
    }
  }
  for (int theta : own_aohs) {
    std::vector<double> row(lp.num_vars, 0.0);
    for (int a = 0; a < na; ++a) row[bvar(theta, a)] = 1.0;
    lp.E.push_back(std::move(row));
    lp.f.push_back(1.0);
  }
  LpSolution sol = solve_lp(lp);

  DecisionRule rule;
  rule.player = p;
  rule.step = sigma.step;
  for (int theta : own_aohs) {
    std::vector<double> probs(static_cast<size_t>(na));
    double total = 0.0;
    for (int a = 0; a < na; ++a) {
      probs[static_cast<size_t>(a)] = std::max(0.0, sol.x[bvar(theta, a)]);
      total += probs[static_cast<size_t>(a)];
    }
    for (double& q : probs) q /= total;
    rule.probs[theta] = std::move(probs);
  }
  return {std::move(rule), sgn * sol.value};
}

}  // namespace detail

/// Exact NES of the one-shot zero-sum Bayesian game at the last step:
/// player 1's rule from the maximizing LP, player 2's from the mirrored one.
/// Value reported to player 1.
inline TerminalSolution terminal_nes(const PosgModel& model,
                                     const OccupancyState& sigma) {
  if (sigma.step != model.horizon - 1)
    throw DataError("terminal game solved at a non-terminal step");
  TerminalSolution out;
  auto [dr1, v1] = detail::terminal_lp(model, sigma, 1);
  auto [dr2, v2] = detail::terminal_lp(model, sigma, 2);
  if (std::abs(v1 - v2) > 1e-6)
    throw LpError("terminal game primal/mirror value mismatch");
  out.dr1 = std::move(dr1);
  out.dr2 = std::move(dr2);
  out.value = v1;
  return out;
}

// ---------------------------------------------------------------------------
// Debug dump
// ---------------------------------------------------------------------------

inline void matrix_to_csv(const PosgModel& model, const GameMatrix& gm,
                          std::ostream& os) {
  os << "aoh,action";
  for (std::size_t w = 0; w < gm.cols(); ++w) os << ",w" << w;
  os << "\n";
  for (std::size_t r = 0; r < gm.rows.size(); ++r) {
    os << gm.rows[r].first << "," << gm.rows[r].second;
    for (std::size_t w = 0; w < gm.cols(); ++w) os << "," << gm.values[r][w];
    os << "\n";
  }
}

}  // namespace posg
