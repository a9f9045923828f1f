#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "posg/lp.hpp"
#include "posg/occupancy.hpp"
#include "posg/strategy.hpp"

namespace posg {

// ---------------------------------------------------------------------------
// Exact best response
// ---------------------------------------------------------------------------

/// A fixed opponent: either a behavioral strategy or a tree strategy
/// (executed natively by augmenting the belief with the current tree node).
struct Opponent {
  const BehavioralStrategy* behavioral = nullptr;
  TreeStrategyPtr tree;

  static Opponent from(const BehavioralStrategy& b) { return {&b, nullptr}; }
  static Opponent from(TreeStrategyPtr t) { return {nullptr, std::move(t)}; }
};

struct BestResponse {
  std::map<int, double> nu;  // own AOH -> value (player-1 payoff terms)
  double value = 0.0;        // sigma^m . nu
};

namespace detail {

// Un-normalized belief item of the best-responder's POMDP: the state is the
// pair (s, opponent AOH), extended with the opponent's current tree node
// when responding to a tree strategy.
using BrKey = std::tuple<int, int, const TreeStrategy*>;
using BrItems = std::map<BrKey, double>;

struct BrBranch {
  int action = 0;
  double p = 0.0;
  const TreeStrategy* next = nullptr;
};

inline std::vector<BrBranch> opponent_branches(const PosgModel& model,
                                               const Opponent& opp, int player,
                                               int theta, int t,
                                               const TreeStrategy* node) {
  std::vector<BrBranch> out;
  if (opp.behavioral) {
    if (!opp.behavioral->covers(t))
      throw DataError("opponent strategy does not cover step " +
                      std::to_string(t));
    const auto* row = opp.behavioral->rule_at(t).find(theta);
    if (!row) throw DataError("opponent strategy does not cover a reachable AOH");
    for (int a = 0; a < model.na(player); ++a)
      if ((*row)[a] != 0.0) out.push_back({a, (*row)[a], nullptr});
    return out;
  }
  if (!node) throw DataError("opponent tree strategy exhausted before horizon");
  for (const auto& n : node->mix) {
    if (n.weight == 0.0) continue;
    const auto* row = n.dr.find(theta);
    if (!row) throw DataError("opponent strategy does not cover a reachable AOH");
    for (int a = 0; a < model.na(node->player); ++a)
      if ((*row)[a] != 0.0)
        out.push_back({a, n.weight * (*row)[a], n.child.get()});
  }
  return out;
}

inline double br_value(const PosgModel& model, int player,
                       const Opponent& opp, int theta_own,
                       const BrItems& items, int t) {
  if (t == model.horizon) return 0.0;
  int op = 3 - player;
  double sign = player == 1 ? 1.0 : -1.0;
  double best = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < model.na(player); ++a) {
    double total = 0.0;
    std::map<int, BrItems> succ;  // own observation -> items
    for (const auto& [key, w] : items) {
      auto [s, theta_opp, node] = key;
      for (const auto& br :
           opponent_branches(model, opp, op, theta_opp, t, node)) {
        int a1 = player == 1 ? a : br.action;
        int a2 = player == 1 ? br.action : a;
        total += sign * w * br.p * model.r(s, a1, a2);
        for (int s2 = 0; s2 < model.ns(); ++s2) {
          for (int zown = 0; zown < model.nz(player); ++zown) {
            for (int zopp = 0; zopp < model.nz(op); ++zopp) {
              int z1 = player == 1 ? zown : zopp;
              int z2 = player == 1 ? zopp : zown;
              double p = w * br.p * model.prob(s, a1, a2, s2, z1, z2);
              if (p == 0.0) continue;
              int theta2 = aohs().child(theta_opp, br.action, zopp);
              succ[zown][{s2, theta2, br.next}] += p;
            }
          }
        }
      }
    }
    for (const auto& [zown, sub] : succ)
      total += sign * model.discount *
               br_value(model, player, opp, aohs().child(theta_own, a, zown),
                        sub, t + 1);
    best = std::max(best, total);
  }
  return sign * best;
}

}  // namespace detail

/// Exact best-response values of `player` against a fixed opponent, rooted
/// at each of the player's AOHs in sigma's support, by backward induction on
/// the finite belief tree. Values are in player-1 payoff terms.
inline BestResponse best_response(const PosgModel& model,
                                  const OccupancyState& sigma, int player,
                                  const Opponent& opp) {
  auto [m, c] = decompose(sigma, player);
  const TreeStrategy* root = opp.tree ? opp.tree.get() : nullptr;
  BestResponse out;
  for (const auto& [own, cells] : c.rows) {
    detail::BrItems items;
    for (const auto& cell : cells)
      for (int s = 0; s < model.ns(); ++s)
        if (cell.belief[s] != 0.0)
          items[{s, cell.other, root}] += cell.p * cell.belief[s];
    out.nu[own] = detail::br_value(model, player, opp, own, items, sigma.step);
    out.value += m.at(own) * out.nu[own];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exploitability
// ---------------------------------------------------------------------------

inline double exploitability(const PosgModel& model, const Opponent& beta1,
                             const Opponent& beta2) {
  OccupancyState sigma0 = initial_occupancy(model);
  double nu2 = best_response(model, sigma0, 1, beta2).value;
  double nu1 = best_response(model, sigma0, 2, beta1).value;
  return (nu2 - nu1) / 2.0;
}

inline double exploitability(const PosgModel& model,
                             const BehavioralStrategy& beta1,
                             const BehavioralStrategy& beta2) {
  return exploitability(model, Opponent::from(beta1), Opponent::from(beta2));
}

inline double sl_gap_percentage(const PosgModel& model, double expl) {
  return 100.0 * 2.0 * expl / (model.horizon * model.reward_span());
}

// ---------------------------------------------------------------------------
// Sequence-form LP oracle
// ---------------------------------------------------------------------------

namespace detail {

/// Sequence-form description of one player's side of the game tree:
/// sequence 0 is the empty sequence; each infoset (reachable AOH) points to
/// the sequence leading to it and owns one sequence per action.
struct SequenceSets {
  std::map<std::pair<int, int>, std::size_t> seq_id;  // (aoh, a) -> id
  std::vector<std::size_t> infoset_parent;            // infoset -> parent seq
  std::map<int, std::size_t> infoset_id;              // aoh -> infoset
  std::size_t num_seqs = 1;

  std::size_t seq(int aoh, int a) { return seq_id.at({aoh, a}); }

  void add_infoset(int aoh, std::size_t parent_seq, int num_actions) {
    if (infoset_id.count(aoh)) return;
    infoset_id[aoh] = infoset_parent.size();
    infoset_parent.push_back(parent_seq);
    for (int a = 0; a < num_actions; ++a) seq_id[{aoh, a}] = num_seqs++;
  }
};

struct SequenceForm {
  SequenceSets p1, p2;
  std::map<std::pair<std::size_t, std::size_t>, double> payoff;  // (seq1,seq2)
};

inline void sf_walk(const PosgModel& model, SequenceForm& sf, int theta1,
                    int theta2, std::size_t par1, std::size_t par2,
                    const std::vector<double>& omega, int t, double disc,
                    std::size_t max_seqs) {
  if (t == model.horizon) return;
  sf.p1.add_infoset(theta1, par1, model.na(1));
  sf.p2.add_infoset(theta2, par2, model.na(2));
  if (sf.p1.num_seqs > max_seqs || sf.p2.num_seqs > max_seqs)
    throw DataError("sequence-form oracle size guard exceeded");
  for (int a1 = 0; a1 < model.na(1); ++a1) {
    for (int a2 = 0; a2 < model.na(2); ++a2) {
      std::size_t s1 = sf.p1.seq(theta1, a1);
      std::size_t s2 = sf.p2.seq(theta2, a2);
      double pay = 0.0;
      for (int s = 0; s < model.ns(); ++s)
        if (omega[s] != 0.0) pay += omega[s] * model.r(s, a1, a2);
      if (pay != 0.0) sf.payoff[{s1, s2}] += disc * pay;
      for (int z1 = 0; z1 < model.nz(1); ++z1) {
        for (int z2 = 0; z2 < model.nz(2); ++z2) {
          std::vector<double> next(model.ns(), 0.0);
          double mass = 0.0;
          for (int s = 0; s < model.ns(); ++s) {
            if (omega[s] == 0.0) continue;
            for (int s2s = 0; s2s < model.ns(); ++s2s) {
              double p = omega[s] * model.prob(s, a1, a2, s2s, z1, z2);
              next[s2s] += p;
              mass += p;
            }
          }
          if (mass <= 1e-15) continue;
          sf_walk(model, sf, aohs().child(theta1, a1, z1),
                  aohs().child(theta2, a2, z2), s1, s2, next, t + 1,
                  disc * model.discount, max_seqs);
        }
      }
    }
  }
}

/// Solves max_x min_y x^T A y over realization plans; returns the value and
/// player 1's plan. Swap roles and negate A for player 2's plan.
inline std::pair<double, std::vector<double>> sf_solve(
    const SequenceSets& rows, const SequenceSets& cols,
    const std::map<std::pair<std::size_t, std::size_t>, double>& payoff) {
  std::size_t nx = rows.num_seqs;
  std::size_t nq = 1 + cols.infoset_parent.size();  // q_0 plus one per infoset
  // Variables: x (nx), then q as q+ - q- (2 * nq).
  LpProblem lp;
  lp.num_vars = nx + 2 * nq;
  lp.c.assign(lp.num_vars, 0.0);
  lp.c[nx] = 1.0;       // q_0+
  lp.c[nx + 1] = -1.0;  // q_0-
  auto qplus = [&](std::size_t i) { return nx + 2 * i; };

  // Children infosets of each column sequence (the empty sequence is 0).
  std::vector<std::vector<std::size_t>> children(cols.num_seqs);
  for (std::size_t i = 0; i < cols.infoset_parent.size(); ++i)
    children[cols.infoset_parent[i]].push_back(i + 1);  // q index offset

  // One inequality per column sequence: E2^T q <= A^T x.
  auto add_col_constraint = [&](std::size_t j, std::size_t owner_q) {
    std::vector<double> row(lp.num_vars, 0.0);
    row[qplus(owner_q)] += 1.0;
    row[qplus(owner_q) + 1] -= 1.0;
    for (std::size_t child : children[j]) {
      row[qplus(child)] -= 1.0;
      row[qplus(child) + 1] += 1.0;
    }
    for (const auto& [key, v] : payoff)
      if (key.second == j) row[key.first] -= v;
    lp.A.push_back(std::move(row));
    lp.b.push_back(0.0);
  };
  add_col_constraint(0, 0);
  for (const auto& [key, id] : cols.seq_id)
    add_col_constraint(id, cols.infoset_id.at(key.first) + 1);

  // Flow conservation of x: x_0 = 1; per row infoset, children sum to parent.
  {
    std::vector<double> row(lp.num_vars, 0.0);
    row[0] = 1.0;
    lp.E.push_back(std::move(row));
    lp.f.push_back(1.0);
  }
  std::map<std::size_t, std::vector<std::size_t>> rows_by_infoset;
  for (const auto& [key, id] : rows.seq_id)
    rows_by_infoset[rows.infoset_id.at(key.first)].push_back(id);
  for (const auto& [infoset, seqs] : rows_by_infoset) {
    std::vector<double> row(lp.num_vars, 0.0);
    for (std::size_t id : seqs) row[id] = 1.0;
    row[rows.infoset_parent[infoset]] -= 1.0;
    lp.E.push_back(std::move(row));
    lp.f.push_back(0.0);
  }
  LpSolution sol = solve_lp(lp);
  return {sol.x[nx] - sol.x[nx + 1],
          std::vector<double>(sol.x.begin(), sol.x.begin() + nx)};
}

/// Realization plan -> behavioral strategy, uniform off the plan's support.
inline BehavioralStrategy plan_to_behavioral(const PosgModel& model,
                                             const SequenceSets& seqs,
                                             const std::vector<double>& x,
                                             int player) {
  BehavioralStrategy beta;
  beta.player = player;
  beta.first_step = 0;
  int na = model.na(player);
  std::map<int, std::map<int, std::vector<double>>> by_step;
  for (const auto& [aoh, infoset] : seqs.infoset_id) {
    double denom = x[seqs.infoset_parent[infoset]];
    std::vector<double> row(static_cast<size_t>(na), 1.0 / na);
    if (denom > 1e-12) {
      double mass = 0.0;
      for (int a = 0; a < na; ++a) {
        row[static_cast<size_t>(a)] =
            std::max(0.0, x[seqs.seq_id.at({aoh, a})]) / denom;
        mass += row[static_cast<size_t>(a)];
      }
      if (mass <= 0.0)
        row.assign(static_cast<size_t>(na), 1.0 / na);
      else
        for (double& p : row) p /= mass;
    }
    by_step[aohs().length(aoh)][aoh] = std::move(row);
  }
  for (int t = 0; t < model.horizon; ++t) {
    DecisionRule dr;
    dr.player = player;
    dr.step = t;
    dr.probs = by_step[t];
    beta.rules.push_back(std::move(dr));
  }
  return beta;
}

}  // namespace detail

struct OracleResult {
  double value = 0.0;
  BehavioralStrategy beta1, beta2;
};

/// Exact NEV and equilibrium strategies via the sequence-form LP.
inline OracleResult sflp_oracle(const PosgModel& model,
                                std::size_t max_seqs = 100000) {
  detail::SequenceForm sf;
  detail::sf_walk(model, sf, aohs().root(), aohs().root(), 0, 0, model.b0, 0,
                  1.0, max_seqs);
  auto [v1, x] = detail::sf_solve(sf.p1, sf.p2, sf.payoff);
  std::map<std::pair<std::size_t, std::size_t>, double> neg;
  for (const auto& [key, v] : sf.payoff) neg[{key.second, key.first}] = -v;
  auto [v2, y] = detail::sf_solve(sf.p2, sf.p1, neg);
  if (std::abs(v1 + v2) > 1e-6)
    throw LpError("sequence-form primal/mirror value mismatch");
  OracleResult out;
  out.value = v1;
  out.beta1 = detail::plan_to_behavioral(model, sf.p1, x, 1);
  out.beta2 = detail::plan_to_behavioral(model, sf.p2, y, 2);
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

namespace detail {

/// Reachable own AOHs per step (positive probability under some profile).
inline std::vector<std::vector<int>> reachable_aohs(const PosgModel& model,
                                                    int player) {
  SequenceForm sf;
  sf_walk(model, sf, aohs().root(), aohs().root(), 0, 0, model.b0, 0, 1.0,
          std::size_t(-1));
  const SequenceSets& seqs = player == 1 ? sf.p1 : sf.p2;
  std::vector<std::vector<int>> out(static_cast<size_t>(model.horizon));
  for (const auto& [aoh, id] : seqs.infoset_id) {
    (void)id;
    out[static_cast<size_t>(aohs().length(aoh))].push_back(aoh);
  }
  return out;
}

/// Expected payoff of a pure plan pair (an action per reachable AOH).
inline double pure_payoff(const PosgModel& model,
                          const std::map<int, int>& plan1,
                          const std::map<int, int>& plan2) {
  // items: (s, theta1, theta2) -> weight
  std::map<std::tuple<int, int, int>, double> items;
  for (int s = 0; s < model.ns(); ++s)
    if (model.b0[s] != 0.0)
      items[{s, aohs().root(), aohs().root()}] = model.b0[s];
  double value = 0.0;
  double disc = 1.0;
  for (int t = 0; t < model.horizon; ++t) {
    std::map<std::tuple<int, int, int>, double> next;
    for (const auto& [key, w] : items) {
      auto [s, t1, t2] = key;
      int a1 = plan1.at(t1);
      int a2 = plan2.at(t2);
      value += disc * w * model.r(s, a1, a2);
      if (t + 1 == model.horizon) continue;
      for (int s2 = 0; s2 < model.ns(); ++s2)
        for (int z1 = 0; z1 < model.nz(1); ++z1)
          for (int z2 = 0; z2 < model.nz(2); ++z2) {
            double p = w * model.prob(s, a1, a2, s2, z1, z2);
            if (p != 0.0)
              next[{s2, aohs().child(t1, a1, z1),
                    aohs().child(t2, a2, z2)}] += p;
          }
    }
    items = std::move(next);
    disc *= model.discount;
  }
  return value;
}

inline std::vector<std::map<int, int>> enumerate_plans(
    const PosgModel& model, int player, std::size_t guard) {
  auto levels = reachable_aohs(model, player);
  std::vector<int> all;
  for (const auto& level : levels)
    all.insert(all.end(), level.begin(), level.end());
  double count = 1.0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    count *= model.na(player);
    if (count > static_cast<double>(guard))
      throw DataError("brute-force oracle size guard exceeded");
  }
  std::vector<std::map<int, int>> plans(1);
  for (int aoh : all) {
    std::vector<std::map<int, int>> grown;
    for (const auto& plan : plans)
      for (int a = 0; a < model.na(player); ++a) {
        auto p = plan;
        p[aoh] = a;
        grown.push_back(std::move(p));
      }
    plans = std::move(grown);
  }
  return plans;
}

}  // namespace detail

/// NEV by enumerating pure plans for both players and solving the resulting
/// matrix game.
inline double brute_force_nev(const PosgModel& model,
                              std::size_t guard = 10000) {
  auto plans1 = detail::enumerate_plans(model, 1, guard);
  auto plans2 = detail::enumerate_plans(model, 2, guard);
  std::vector<std::vector<double>> payoff(
      plans1.size(), std::vector<double>(plans2.size(), 0.0));
  for (std::size_t i = 0; i < plans1.size(); ++i)
    for (std::size_t j = 0; j < plans2.size(); ++j)
      payoff[i][j] = detail::pure_payoff(model, plans1[i], plans2[j]);

  // max_x min_j x^T payoff_j: variables x, v+ and v-.
  std::size_t n = plans1.size();
  LpProblem lp;
  lp.num_vars = n + 2;
  lp.c.assign(lp.num_vars, 0.0);
  lp.c[n] = 1.0;
  lp.c[n + 1] = -1.0;
  for (std::size_t j = 0; j < plans2.size(); ++j) {
    std::vector<double> row(lp.num_vars, 0.0);
    for (std::size_t i = 0; i < n; ++i) row[i] = -payoff[i][j];
    row[n] = 1.0;
    row[n + 1] = -1.0;
    lp.A.push_back(std::move(row));
    lp.b.push_back(0.0);
  }
  {
    std::vector<double> row(lp.num_vars, 0.0);
    for (std::size_t i = 0; i < n; ++i) row[i] = 1.0;
    lp.E.push_back(std::move(row));
    lp.f.push_back(1.0);
  }
  LpSolution sol = solve_lp(lp);
  return sol.x[n] - sol.x[n + 1];
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline nlohmann::json eval_to_json(const PosgModel& model, double nu1,
                                   double nu2) {
  double expl = (nu2 - nu1) / 2.0;
  return {{"nu1", nu1},
          {"nu2", nu2},
          {"exploitability", expl},
          {"sl_gap_pct", sl_gap_percentage(model, expl)}};
}

}  // namespace posg
