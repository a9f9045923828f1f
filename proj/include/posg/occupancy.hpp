#pragma once

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "posg/model.hpp"

namespace posg {

// ---------------------------------------------------------------------------
// Occupancy states
// ---------------------------------------------------------------------------

/// Sparse distribution over joint AOH pairs at a fixed step, with the
/// per-entry state belief cached ("full occupancy state"). Zero entries are
/// pruned; beliefs are extended incrementally on transition rather than
/// re-filtered from scratch. Immutable once built.
struct OccupancyState {
  struct Entry {
    int aoh1 = 0;
    int aoh2 = 0;
    double p = 0.0;
    Belief belief;
  };

  int step = 0;
  std::vector<Entry> entries;  // sorted by (aoh1, aoh2)

  double mass() const {
    double m = 0.0;
    for (const auto& e : entries) m += e.p;
    return m;
  }

  const Entry* find(int aoh1, int aoh2) const {
    auto it = std::lower_bound(
        entries.begin(), entries.end(), std::make_pair(aoh1, aoh2),
        [](const Entry& e, const std::pair<int, int>& k) {
          return std::make_pair(e.aoh1, e.aoh2) < k;
        });
    if (it == entries.end() || it->aoh1 != aoh1 || it->aoh2 != aoh2)
      return nullptr;
    return &*it;
  }

  /// Distinct AOHs of one player appearing in the support, sorted.
  std::vector<int> support(int player) const {
    std::vector<int> out;
    for (const auto& e : entries) out.push_back(player == 1 ? e.aoh1 : e.aoh2);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

/// sigma^{m,i}: probability of player i facing each of their AOHs.
struct Marginal {
  int player = 1;
  std::map<int, double> probs;

  double at(int aoh) const {
    auto it = probs.find(aoh);
    return it == probs.end() ? 0.0 : it->second;
  }
};

/// sigma^{c,i}: per own-AOH distribution over the opponent's AOHs, carrying
/// the joint state beliefs so that downstream operators need no re-filtering.
/// Rows exist only for AOHs in the support of the matching marginal.
struct Conditional {
  struct Cell {
    int other = 0;  // opponent AOH
    double p = 0.0;
    Belief belief;  // b(s | theta^1, theta^2)
  };

  int player = 1;
  int step = 0;
  std::map<int, std::vector<Cell>> rows;  // own AOH -> cells sorted by other

  const std::vector<Cell>* row(int aoh) const {
    auto it = rows.find(aoh);
    return it == rows.end() ? nullptr : &it->second;
  }
};

inline OccupancyState initial_occupancy(const PosgModel& model) {
  OccupancyState sigma;
  sigma.step = 0;
  sigma.entries.push_back(
      {aohs().root(), aohs().root(), 1.0, model.b0});
  return sigma;
}

// ---------------------------------------------------------------------------
// Core operators
// ---------------------------------------------------------------------------

namespace detail {

inline const std::vector<double>& rule_row(const DecisionRule& rule, int aoh,
                                           const char* who) {
  const auto* row = rule.find(aoh);
  if (!row)
    throw DataError(std::string("decision rule for ") + who +
                    " is missing an in-support AOH");
  return *row;
}

}  // namespace detail

/// T(sigma, beta): next occupancy state. Entries below prune_eps are dropped
/// and the rest renormalized; child beliefs come from one filter step on the
/// parent belief.
inline OccupancyState transition(const PosgModel& model,
                                 const OccupancyState& sigma,
                                 const DecisionRule& dr1,
                                 const DecisionRule& dr2) {
  OccupancyState next;
  next.step = sigma.step + 1;
  std::map<std::pair<int, int>, OccupancyState::Entry> acc;
  for (const auto& e : sigma.entries) {
    const auto& row1 = detail::rule_row(dr1, e.aoh1, "player 1");
    const auto& row2 = detail::rule_row(dr2, e.aoh2, "player 2");
    for (int a1 = 0; a1 < model.na(1); ++a1) {
      if (row1[a1] == 0.0) continue;
      for (int a2 = 0; a2 < model.na(2); ++a2) {
        if (row2[a2] == 0.0) continue;
        for (int z1 = 0; z1 < model.nz(1); ++z1) {
          for (int z2 = 0; z2 < model.nz(2); ++z2) {
            Belief child(model.ns(), 0.0);
            double w = 0.0;
            for (int s = 0; s < model.ns(); ++s) {
              if (e.belief[s] == 0.0) continue;
              for (int s2 = 0; s2 < model.ns(); ++s2) {
                double p = e.belief[s] * model.prob(s, a1, a2, s2, z1, z2);
                child[s2] += p;
                w += p;
              }
            }
            if (w <= 0.0) continue;
            for (double& p : child) p /= w;
            double mass = e.p * row1[a1] * row2[a2] * w;
            if (mass <= 0.0) continue;
            int c1 = aohs().child(e.aoh1, a1, z1);
            int c2 = aohs().child(e.aoh2, a2, z2);
            acc.insert({{c1, c2},
                        OccupancyState::Entry{c1, c2, mass, std::move(child)}});
          }
        }
      }
    }
  }
  double total = 0.0;
  for (auto& [key, entry] : acc) {
    if (entry.p < numeric_config().prune_eps) continue;
    total += entry.p;
    next.entries.push_back(std::move(entry));
  }
  for (auto& e : next.entries) e.p /= total;
  return next;
}

/// r(sigma, beta): expected one-step payoff to player 1.
inline double expected_reward(const PosgModel& model,
                              const OccupancyState& sigma,
                              const DecisionRule& dr1,
                              const DecisionRule& dr2) {
  double value = 0.0;
  for (const auto& e : sigma.entries) {
    const auto& row1 = detail::rule_row(dr1, e.aoh1, "player 1");
    const auto& row2 = detail::rule_row(dr2, e.aoh2, "player 2");
    for (int a1 = 0; a1 < model.na(1); ++a1) {
      if (row1[a1] == 0.0) continue;
      for (int a2 = 0; a2 < model.na(2); ++a2) {
        if (row2[a2] == 0.0) continue;
        double er = 0.0;
        for (int s = 0; s < model.ns(); ++s)
          er += e.belief[s] * model.r(s, a1, a2);
        value += e.p * row1[a1] * row2[a2] * er;
      }
    }
  }
  return value;
}

/// Factorizes sigma(theta^1, theta^2) = m(theta^i) * c(theta^{-i} | theta^i).
inline std::pair<Marginal, Conditional> decompose(const OccupancyState& sigma,
                                                  int player) {
  Marginal m;
  m.player = player;
  Conditional c;
  c.player = player;
  c.step = sigma.step;
  for (const auto& e : sigma.entries) {
    int own = player == 1 ? e.aoh1 : e.aoh2;
    int other = player == 1 ? e.aoh2 : e.aoh1;
    m.probs[own] += e.p;
    c.rows[own].push_back({other, e.p, e.belief});
  }
  for (auto& [own, cells] : c.rows) {
    double total = m.probs[own];
    std::sort(cells.begin(), cells.end(),
              [](const Conditional::Cell& a, const Conditional::Cell& b) {
                return a.other < b.other;
              });
    for (auto& cell : cells) cell.p /= total;
  }
  return {std::move(m), std::move(c)};
}

/// T^{m,i}(sigma, beta): the marginal of the next occupancy state, without
/// forming the joint. Linear in sigma and both decision rules.
inline Marginal transition_marginal(const PosgModel& model,
                                    const OccupancyState& sigma,
                                    const DecisionRule& dr1,
                                    const DecisionRule& dr2, int player) {
  Marginal m;
  m.player = player;
  for (const auto& e : sigma.entries) {
    const auto& row1 = detail::rule_row(dr1, e.aoh1, "player 1");
    const auto& row2 = detail::rule_row(dr2, e.aoh2, "player 2");
    int own = player == 1 ? e.aoh1 : e.aoh2;
    for (int a1 = 0; a1 < model.na(1); ++a1) {
      if (row1[a1] == 0.0) continue;
      for (int a2 = 0; a2 < model.na(2); ++a2) {
        if (row2[a2] == 0.0) continue;
        int aown = player == 1 ? a1 : a2;
        for (int zown = 0; zown < model.nz(player); ++zown) {
          double w = 0.0;
          for (int s = 0; s < model.ns(); ++s) {
            if (e.belief[s] == 0.0) continue;
            for (int s2 = 0; s2 < model.ns(); ++s2) {
              for (int zother = 0; zother < model.nz(3 - player); ++zother) {
                int z1 = player == 1 ? zown : zother;
                int z2 = player == 1 ? zother : zown;
                w += e.belief[s] * model.prob(s, a1, a2, s2, z1, z2);
              }
            }
          }
          if (w <= 0.0) continue;
          m.probs[aohs().child(own, aown, zown)] +=
              e.p * row1[a1] * row2[a2] * w;
        }
      }
    }
  }
  return m;
}

/// T^{c,i}(sigma^{c,i}, beta^{-i}): the conditional of the next occupancy
/// state, computed from the current conditional and the opponent's decision
/// rule only (it does not depend on player i's rule or on sigma^{m,i}).
/// Rows with zero reach probability are omitted.
inline Conditional transition_conditional(const PosgModel& model,
                                          const Conditional& cond,
                                          const DecisionRule& opp_rule) {
  int player = cond.player;
  Conditional next;
  next.player = player;
  next.step = cond.step + 1;
  for (const auto& [own, cells] : cond.rows) {
    for (int aown = 0; aown < model.na(player); ++aown) {
      for (int zown = 0; zown < model.nz(player); ++zown) {
        int child_own = aohs().child(own, aown, zown);
        std::map<int, std::pair<double, Belief>> row;
        double mass = 0.0;
        for (const auto& cell : cells) {
          const auto& opp_row =
              detail::rule_row(opp_rule, cell.other, "opponent");
          for (int aopp = 0; aopp < model.na(3 - player); ++aopp) {
            if (opp_row[aopp] == 0.0) continue;
            for (int zopp = 0; zopp < model.nz(3 - player); ++zopp) {
              int a1 = player == 1 ? aown : aopp;
              int a2 = player == 1 ? aopp : aown;
              int z1 = player == 1 ? zown : zopp;
              int z2 = player == 1 ? zopp : zown;
              Belief child(model.ns(), 0.0);
              double w = 0.0;
              for (int s = 0; s < model.ns(); ++s) {
                if (cell.belief[s] == 0.0) continue;
                for (int s2 = 0; s2 < model.ns(); ++s2) {
                  double p =
                      cell.belief[s] * model.prob(s, a1, a2, s2, z1, z2);
                  child[s2] += p;
                  w += p;
                }
              }
              if (w <= 0.0) continue;
              for (double& p : child) p /= w;
              double cmass = cell.p * opp_row[aopp] * w;
              if (cmass <= 0.0) continue;
              int child_other = aohs().child(cell.other, aopp, zopp);
              auto& slot = row[child_other];
              slot.first += cmass;
              slot.second = std::move(child);
              mass += cmass;
            }
          }
        }
        if (mass <= 0.0) continue;
        auto& out = next.rows[child_own];
        for (auto& [other, pb] : row)
          out.push_back({other, pb.first / mass, std::move(pb.second)});
      }
    }
  }
  return next;
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

inline double l1_distance(const OccupancyState& a, const OccupancyState& b) {
  if (a.step != b.step)
    throw DataError("l1_distance on occupancy states of different steps");
  double d = 0.0;
  size_t i = 0, j = 0;
  while (i < a.entries.size() || j < b.entries.size()) {
    if (j >= b.entries.size()) {
      d += std::abs(a.entries[i++].p);
    } else if (i >= a.entries.size()) {
      d += std::abs(b.entries[j++].p);
    } else {
      auto ka = std::make_pair(a.entries[i].aoh1, a.entries[i].aoh2);
      auto kb = std::make_pair(b.entries[j].aoh1, b.entries[j].aoh2);
      if (ka < kb) {
        d += std::abs(a.entries[i++].p);
      } else if (kb < ka) {
        d += std::abs(b.entries[j++].p);
      } else {
        d += std::abs(a.entries[i++].p - b.entries[j++].p);
      }
    }
  }
  return d;
}

/// l1 distance between two conditional rows (distributions over opponent
/// AOHs), with missing keys treated as zero.
inline double conditional_row_l1(const std::vector<Conditional::Cell>& a,
                                 const std::vector<Conditional::Cell>& b) {
  double d = 0.0;
  size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j >= b.size()) {
      d += std::abs(a[i++].p);
    } else if (i >= a.size()) {
      d += std::abs(b[j++].p);
    } else if (a[i].other < b[j].other) {
      d += std::abs(a[i++].p);
    } else if (b[j].other < a[i].other) {
      d += std::abs(b[j++].p);
    } else {
      d += std::abs(a[i].p - b[j].p);
      ++i, ++j;
    }
  }
  return d;
}

/// Row-wise l1 distances between two conditionals, keyed by own AOH.
/// Rows present in only one side get the worst-case distance 2.
inline std::map<int, double> conditional_row_l1(const Conditional& a,
                                                const Conditional& b) {
  std::map<int, double> out;
  for (const auto& [own, cells] : a.rows) {
    const auto* other = b.row(own);
    out[own] = other ? conditional_row_l1(cells, *other) : 2.0;
  }
  for (const auto& [own, cells] : b.rows)
    if (!a.row(own)) out[own] = 2.0;
  return out;
}

/// || sigma - sigma^{m,i} * c ||_1, i.e. the distance between sigma and the
/// joint rebuilt from sigma's own marginal and the candidate conditional `c`.
/// Rows of the marginal support missing from `c` contribute 2 * m(theta).
inline double recomposition_l1(const OccupancyState& sigma,
                               const Conditional& c) {
  auto [own_m, own_c] = decompose(sigma, c.player);
  double d = 0.0;
  for (const auto& [own, p_own] : own_m.probs) {
    const auto* row = c.row(own);
    if (!row) {
      d += 2.0 * p_own;
      continue;
    }
    d += p_own * conditional_row_l1(*own_c.row(own), *row);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Debug dump
// ---------------------------------------------------------------------------

inline nlohmann::json occupancy_to_json(const PosgModel& model,
                                        const OccupancyState& sigma) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : sigma.entries) {
    entries.push_back({{"aoh1", format_aoh(e.aoh1, model.actions1, model.obs1)},
                       {"aoh2", format_aoh(e.aoh2, model.actions2, model.obs2)},
                       {"p", e.p},
                       {"belief", e.belief}});
  }
  return {{"step", sigma.step}, {"entries", entries}};
}

}  // namespace posg
