#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include <json.hpp>

#include "posg/occupancy.hpp"
#include "posg/strategy.hpp"

namespace posg {

// ---------------------------------------------------------------------------
// Lipschitz schedule
// ---------------------------------------------------------------------------

enum class LambdaMode { kPaper, kTheorem };

/// Per-step Lipschitz constants of the optimal value function. Theorem mode
/// uses the tight constant lambda_tau = h(H, tau, gamma) * (r_max - r_min)/2;
/// paper mode uses the looser (H - tau) * (r_max - r_min) the experiments ran
/// with.
struct LipschitzSchedule {
  LambdaMode mode = LambdaMode::kPaper;
  std::vector<double> lambdas;  // index tau = 0..H

  double at(int tau) const { return lambdas.at(static_cast<size_t>(tau)); }
};

inline LipschitzSchedule make_schedule(const PosgModel& model,
                                       LambdaMode mode) {
  LipschitzSchedule sched;
  sched.mode = mode;
  for (int tau = 0; tau <= model.horizon; ++tau) {
    double span = model.reward_span();
    double lam =
        mode == LambdaMode::kTheorem
            ? 0.5 * horizon_mass(model.horizon, tau, model.discount) * span
            : (model.horizon - tau) * span;
    sched.lambdas.push_back(lam);
  }
  return sched;
}

// ---------------------------------------------------------------------------
// Bound tuple sets
// ---------------------------------------------------------------------------

/// Element of the W-bound set at step tau. For the upper bound this is
/// <sigma~^{c,1}_tau, beta^2_tau, <nu^2_{tau+1}, psi^2_{tau+1}>>: the
/// opponent's stored rule and continuation against which the row player's
/// stage payoff is bounded. The lower set mirrors the roles. At tau = H-1
/// tuples are terminal: the continuation is absent and only the stage
/// reward counts.
struct WTuple {
  Conditional anchor;   // conditional of the row player at tau
  DecisionRule dr_opp;  // stored column-player rule at tau
  std::map<int, double> nu_next;  // row-player AOH at tau+1 -> value
  TreeStrategyPtr psi_next;       // null iff terminal
  bool terminal = false;
};

/// Element of the V-bound set at step tau:
/// <sigma~^{c,1}_tau, <nu^2_tau, psi^2_tau>>.
struct VTuple {
  Conditional anchor;
  std::map<int, double> nu;  // row-player AOH at tau -> value
  TreeStrategyPtr psi;
};

/// One side of the sandwich. The upper bound takes player 1 as the row
/// player and aggregates with min (+lambda penalty); the lower bound mirrors
/// everything with player 2 rows, max aggregation and -lambda.
struct BoundSide {
  int row_player = 1;
  double sign = 1.0;       // +1 upper, -1 lower
  double extremum = 0.0;   // r_max (upper) or r_min (lower)
  std::vector<std::vector<VTuple>> v;  // J set, index tau = 0..H-1
  std::vector<std::vector<WTuple>> w;  // I set, index tau = 0..H-1
};

struct BoundSets {
  LipschitzSchedule lipschitz;
  BoundSide upper, lower;

  const BoundSide& side(bool is_upper) const { return is_upper ? upper : lower; }
  BoundSide& side(bool is_upper) { return is_upper ? upper : lower; }
};

/// Fallback value for row-player AOHs a tuple does not cover: the worst
/// admissible bound r_ext * h(H, tau, gamma).
inline double nu_fallback(const PosgModel& model, const BoundSide& side,
                          int tau) {
  return side.extremum * horizon_mass(model.horizon, tau, model.discount);
}

// ---------------------------------------------------------------------------
// V-bound evaluation
// ---------------------------------------------------------------------------

/// Value of one V-tuple at sigma: sigma^m . nu + sign * lambda_tau *
/// || sigma - sigma^m sigma~^c ||_1, with missing anchor rows penalized by
/// the worst-case distance 2 and missing nu entries by the fallback.
inline double v_tuple_value(const PosgModel& model, const BoundSets& sets,
                            const BoundSide& side, const VTuple& tuple,
                            const Marginal& m, const Conditional& c, int tau) {
  double fallback = nu_fallback(model, side, tau);
  double lambda = sets.lipschitz.at(tau);
  double value = 0.0;
  for (const auto& [own, p] : m.probs) {
    auto it = tuple.nu.find(own);
    value += p * (it == tuple.nu.end() ? fallback : it->second);
    const auto* anchor_row = tuple.anchor.row(own);
    double d = anchor_row ? conditional_row_l1(*c.row(own), *anchor_row) : 2.0;
    value += side.sign * lambda * p * d;
  }
  return value;
}

inline double bound_v(const PosgModel& model, const BoundSets& sets,
                      bool is_upper, const OccupancyState& sigma) {
  const BoundSide& side = sets.side(is_upper);
  const auto& tuples = side.v.at(static_cast<size_t>(sigma.step));
  if (tuples.empty()) throw DataError("empty bound set at this step");
  auto [m, c] = decompose(sigma, side.row_player);
  double best = 0.0;
  bool first = true;
  for (const auto& tuple : tuples) {
    double val = v_tuple_value(model, sets, side, tuple, m, c, sigma.step);
    if (first || side.sign * val < side.sign * best) best = val;
    first = false;
  }
  return best;
}

inline double upper_v(const PosgModel& model, const BoundSets& sets,
                      const OccupancyState& sigma) {
  return bound_v(model, sets, true, sigma);
}

inline double lower_v(const PosgModel& model, const BoundSets& sets,
                      const OccupancyState& sigma) {
  return bound_v(model, sets, false, sigma);
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace detail {

/// Backward pass for one side: a chain of uniform-rule tuples valued at the
/// per-step extremum, anchored on the uniform-play occupancy trajectory.
inline void init_side(const PosgModel& model, BoundSide& side,
                      const std::vector<OccupancyState>& sigmas,
                      const std::vector<DecisionRule>& opp_rules) {
  int h = model.horizon;
  side.v.assign(static_cast<size_t>(h), {});
  side.w.assign(static_cast<size_t>(h), {});

  auto nu_at = [&](int tau) {
    std::map<int, double> nu;
    double val = nu_fallback(model, side, tau);
    for (int own : sigmas[static_cast<size_t>(tau)].support(side.row_player))
      nu[own] = val;
    return nu;
  };

  TreeStrategyPtr chain;
  for (int tau = h - 1; tau >= 0; --tau) {
    auto node = std::make_shared<TreeStrategy>();
    node->player = 3 - side.row_player;
    node->step = tau;
    node->mix.push_back({1.0, opp_rules[static_cast<size_t>(tau)], chain});

    auto [m, c] = decompose(sigmas[static_cast<size_t>(tau)], side.row_player);
    VTuple vt;
    vt.anchor = c;
    vt.nu = nu_at(tau);
    vt.psi = node;
    side.v[static_cast<size_t>(tau)].push_back(std::move(vt));

    if (tau + 1 <= h - 1) {
      WTuple wt;
      wt.anchor = c;
      wt.dr_opp = opp_rules[static_cast<size_t>(tau)];
      wt.nu_next = nu_at(tau + 1);
      wt.psi_next = chain;
      side.w[static_cast<size_t>(tau)].push_back(std::move(wt));
    }
    chain = node;
  }
}

}  // namespace detail

inline BoundSets init_bounds(const PosgModel& model, LambdaMode mode) {
  BoundSets sets;
  sets.lipschitz = make_schedule(model, mode);
  sets.upper = {1, 1.0, model.r_max(), {}, {}};
  sets.lower = {2, -1.0, model.r_min(), {}, {}};

  std::vector<OccupancyState> sigmas;
  std::vector<DecisionRule> rules1, rules2;
  sigmas.push_back(initial_occupancy(model));
  for (int tau = 0; tau < model.horizon; ++tau) {
    const auto& sigma = sigmas.back();
    rules1.push_back(uniform_rule(model, 1, tau, sigma.support(1)));
    rules2.push_back(uniform_rule(model, 2, tau, sigma.support(2)));
    if (tau + 1 < model.horizon)
      sigmas.push_back(transition(model, sigma, rules1.back(), rules2.back()));
  }

  detail::init_side(model, sets.upper, sigmas, rules2);
  detail::init_side(model, sets.lower, sigmas, rules1);
  return sets;
}

// ---------------------------------------------------------------------------
// Update
// ---------------------------------------------------------------------------

/// Result of a dual game solve used to refine one side at step tau.
struct Backup {
  std::map<int, double> nu;  // row-player AOH at tau -> value
  TreeStrategyPtr psi;       // column-player continuation from tau
};

/// Appends <sigma^{c}_tau, <nu, psi>> to the V set at tau and, unless tau is
/// 0, <sigma^{c}_{tau-1}, dr_opp_prev, <nu, psi>> to the W set at tau - 1.
inline void update_after_step(const PosgModel& model, BoundSets& sets,
                              bool is_upper, int tau,
                              const OccupancyState* sigma_prev,
                              const DecisionRule* dr_opp_prev,
                              const OccupancyState& sigma,
                              const Backup& backup,
                              bool publish_pair = true) {
  BoundSide& side = sets.side(is_upper);
  if (tau < 0 || tau >= model.horizon)
    throw DataError("bound update step out of range");

  VTuple vt;
  vt.anchor = decompose(sigma, side.row_player).second;
  vt.nu = backup.nu;
  vt.psi = backup.psi;
  side.v[static_cast<size_t>(tau)].push_back(std::move(vt));

  if (tau == 0 || !publish_pair) return;
  if (!sigma_prev || !dr_opp_prev)
    throw DataError("bound update at tau > 0 requires the parent step");
  WTuple wt;
  wt.anchor = decompose(*sigma_prev, side.row_player).second;
  wt.dr_opp = *dr_opp_prev;
  wt.nu_next = backup.nu;
  wt.psi_next = backup.psi;
  side.w[static_cast<size_t>(tau - 1)].push_back(std::move(wt));
}

/// Stores the terminal-stage tuple <sigma^{c}_{H-1}, dr_opp, -> produced by
/// the exact last-stage game.
inline void add_terminal_tuple(const PosgModel& model, BoundSets& sets,
                               bool is_upper, const OccupancyState& sigma,
                               const DecisionRule& dr_opp) {
  BoundSide& side = sets.side(is_upper);
  if (sigma.step != model.horizon - 1)
    throw DataError("terminal tuple stored at a non-terminal step");
  WTuple wt;
  wt.anchor = decompose(sigma, side.row_player).second;
  wt.dr_opp = dr_opp;
  wt.terminal = true;
  side.w[static_cast<size_t>(sigma.step)].push_back(std::move(wt));
}

// ---------------------------------------------------------------------------
// Snapshot serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json conditional_to_json(const Conditional& c) {
  nlohmann::json rows = nlohmann::json::object();
  for (const auto& [own, cells] : c.rows) {
    nlohmann::json jcells = nlohmann::json::array();
    for (const auto& cell : cells)
      jcells.push_back(
          {{"other", cell.other}, {"p", cell.p}, {"belief", cell.belief}});
    rows[std::to_string(own)] = std::move(jcells);
  }
  return {{"player", c.player}, {"step", c.step}, {"rows", rows}};
}

inline nlohmann::json nu_to_json(const std::map<int, double>& nu) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [aoh, v] : nu) out[std::to_string(aoh)] = v;
  return out;
}

inline nlohmann::json side_to_json(const BoundSide& side) {
  nlohmann::json jv = nlohmann::json::array();
  for (const auto& tuples : side.v) {
    nlohmann::json level = nlohmann::json::array();
    for (const auto& t : tuples)
      level.push_back({{"anchor", conditional_to_json(t.anchor)},
                       {"nu", nu_to_json(t.nu)}});
    jv.push_back(std::move(level));
  }
  nlohmann::json jw = nlohmann::json::array();
  for (const auto& tuples : side.w) {
    nlohmann::json level = nlohmann::json::array();
    for (const auto& t : tuples)
      level.push_back({{"anchor", conditional_to_json(t.anchor)},
                       {"nu_next", nu_to_json(t.nu_next)},
                       {"terminal", t.terminal}});
    jw.push_back(std::move(level));
  }
  return {{"row_player", side.row_player}, {"v", jv}, {"w", jw}};
}

}  // namespace detail

inline nlohmann::json bounds_to_json(const BoundSets& sets) {
  return {{"lambda_mode",
           sets.lipschitz.mode == LambdaMode::kPaper ? "paper" : "theorem"},
          {"lambdas", sets.lipschitz.lambdas},
          {"upper", detail::side_to_json(sets.upper)},
          {"lower", detail::side_to_json(sets.lower)}};
}

}  // namespace posg
