#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "posg/common.hpp"

namespace posg {

// ---------------------------------------------------------------------------
// Action-observation histories
// ---------------------------------------------------------------------------

/// Interned action-observation histories. An AOH is a private sequence
/// (a_0, z_1, a_1, ..., z_t); ids are stable for the lifetime of the process
/// and identical sequences always intern to the same id, so ids can be used
/// as O(1) map keys. Id 0 is the empty history.
class AohStore {
 public:
  struct Node {
    int parent = -1;
    int action = -1;
    int obs = -1;
    int length = 0;  // number of (action, observation) pairs
  };

  static AohStore& instance() {
    static AohStore store;
    return store;
  }

  int root() const { return 0; }

  int child(int parent, int action, int obs) {
    auto key = std::make_tuple(parent, action, obs);
    auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    Node n;
    n.parent = parent;
    n.action = action;
    n.obs = obs;
    n.length = nodes_[parent].length + 1;
    nodes_.push_back(n);
    int id = static_cast<int>(nodes_.size()) - 1;
    index_.emplace(key, id);
    return id;
  }

  const Node& node(int id) const { return nodes_[id]; }
  int length(int id) const { return nodes_[id].length; }
  int parent(int id) const { return nodes_[id].parent; }

  /// Entries from the root down to `id`, oldest first.
  std::vector<std::pair<int, int>> entries(int id) const {
    std::vector<std::pair<int, int>> out;
    for (int cur = id; cur != 0; cur = nodes_[cur].parent)
      out.emplace_back(nodes_[cur].action, nodes_[cur].obs);
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  AohStore() { nodes_.push_back(Node{}); }
  std::vector<Node> nodes_;
  std::map<std::tuple<int, int, int>, int> index_;
};

inline AohStore& aohs() { return AohStore::instance(); }

/// Renders an AOH as "a0/z1/a1/z2/...", using the given name tables.
inline std::string format_aoh(int id, const std::vector<std::string>& actions,
                              const std::vector<std::string>& obs) {
  std::string out;
  for (auto [a, z] : aohs().entries(id)) {
    if (!out.empty()) out += '/';
    out += actions[a];
    out += '/';
    out += obs[z];
  }
  return out;
}

/// Parses the output of format_aoh back into an interned id.
inline int parse_aoh(const std::string& text,
                     const std::vector<std::string>& actions,
                     const std::vector<std::string>& obs) {
  if (text.empty()) return aohs().root();
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, '/')) parts.push_back(tok);
  if (parts.size() % 2 != 0) throw DataError("malformed AOH string: " + text);
  int id = aohs().root();
  for (size_t i = 0; i < parts.size(); i += 2) {
    auto ait = std::find(actions.begin(), actions.end(), parts[i]);
    auto zit = std::find(obs.begin(), obs.end(), parts[i + 1]);
    if (ait == actions.end() || zit == obs.end())
      throw DataError("unknown action/observation in AOH: " + text);
    id = aohs().child(id, static_cast<int>(ait - actions.begin()),
                      static_cast<int>(zit - obs.begin()));
  }
  return id;
}

// ---------------------------------------------------------------------------
// Game model
// ---------------------------------------------------------------------------

using Belief = std::vector<double>;  // distribution over states

/// A finite 2-player zero-sum POSG: states, per-player actions and
/// observations, joint kernel P(s', z1, z2 | s, a1, a2), payoff r(s, a1, a2)
/// to player 1, horizon, discount, and initial state distribution.
/// Immutable after construction.
class PosgModel {
 public:
  std::vector<std::string> states;
  std::vector<std::string> actions1, actions2;
  std::vector<std::string> obs1, obs2;
  int horizon = 0;
  double discount = 1.0;
  Belief b0;

  // trans[s][a1][a2] is a flat row over (s', z1, z2).
  std::vector<std::vector<std::vector<std::vector<double>>>> trans;
  // reward[s][a1][a2]
  std::vector<std::vector<std::vector<double>>> reward;

  int ns() const { return static_cast<int>(states.size()); }
  int na(int player) const {
    return static_cast<int>(player == 1 ? actions1.size() : actions2.size());
  }
  int nz(int player) const {
    return static_cast<int>(player == 1 ? obs1.size() : obs2.size());
  }

  int trans_index(int s2, int z1, int z2) const {
    return (s2 * static_cast<int>(obs1.size()) + z1) *
               static_cast<int>(obs2.size()) +
           z2;
  }

  double prob(int s, int a1, int a2, int s2, int z1, int z2) const {
    return trans[s][a1][a2][trans_index(s2, z1, z2)];
  }

  double r(int s, int a1, int a2) const { return reward[s][a1][a2]; }

  double r_max() const { return r_max_; }
  double r_min() const { return r_min_; }
  double reward_span() const { return r_max_ - r_min_; }

  const std::vector<std::string>& actions(int player) const {
    return player == 1 ? actions1 : actions2;
  }
  const std::vector<std::string>& observations(int player) const {
    return player == 1 ? obs1 : obs2;
  }

  /// Validates kernel/initial-belief normalization and caches reward extrema.
  /// Throws DataError on violations larger than `tol`.
  void finalize(double tol = 1e-6) {
    if (horizon < 1) throw DataError("horizon must be >= 1");
    if (discount < 0.0 || discount > 1.0)
      throw DataError("discount must lie in [0, 1]");
    double b0_sum = 0.0;
    for (double p : b0) {
      if (p < -1e-12 || p > 1.0 + 1e-12)
        throw DataError("initial-belief probability outside [0, 1]");
      b0_sum += p;
    }
    if (std::abs(b0_sum - 1.0) > tol)
      throw DataError("initial belief does not sum to 1");
    r_max_ = -std::numeric_limits<double>::infinity();
    r_min_ = std::numeric_limits<double>::infinity();
    for (int s = 0; s < ns(); ++s) {
      for (int a1 = 0; a1 < na(1); ++a1) {
        for (int a2 = 0; a2 < na(2); ++a2) {
          double row = 0.0;
          for (double p : trans[s][a1][a2]) {
            if (p < -1e-12 || p > 1.0 + 1e-12)
              throw DataError("transition probability outside [0, 1]");
            row += p;
          }
          if (std::abs(row - 1.0) > tol) {
            std::ostringstream msg;
            msg << "transition row (s=" << states[s] << ", a1=" << actions1[a1]
                << ", a2=" << actions2[a2] << ") sums to " << row;
            throw DataError(msg.str());
          }
          r_max_ = std::max(r_max_, reward[s][a1][a2]);
          r_min_ = std::min(r_min_, reward[s][a1][a2]);
        }
      }
    }
  }

  void allocate() {
    int row = ns() * nz(1) * nz(2);
    trans.assign(ns(), std::vector<std::vector<std::vector<double>>>(
                           na(1), std::vector<std::vector<double>>(
                                      na(2), std::vector<double>(row, 0.0))));
    reward.assign(ns(), std::vector<std::vector<double>>(
                            na(1), std::vector<double>(na(2), 0.0)));
    b0.assign(ns(), 0.0);
  }

 private:
  double r_max_ = 0.0;
  double r_min_ = 0.0;
};

// ---------------------------------------------------------------------------
// Decision rules and behavioral strategies
// ---------------------------------------------------------------------------

/// One step of a behavioral strategy: a map from private AOHs (of length
/// `step`) to distributions over the owning player's actions.
struct DecisionRule {
  int player = 1;
  int step = 0;
  std::map<int, std::vector<double>> probs;  // aoh id -> action distribution

  const std::vector<double>* find(int aoh) const {
    auto it = probs.find(aoh);
    return it == probs.end() ? nullptr : &it->second;
  }
};

inline DecisionRule uniform_rule(const PosgModel& model, int player, int step,
                                 const std::vector<int>& support) {
  DecisionRule rule;
  rule.player = player;
  rule.step = step;
  std::vector<double> u(model.na(player), 1.0 / model.na(player));
  for (int aoh : support) rule.probs[aoh] = u;
  return rule;
}

inline DecisionRule dirac_rule(const PosgModel& model, int player, int step,
                               const std::vector<int>& support, int action) {
  DecisionRule rule;
  rule.player = player;
  rule.step = step;
  std::vector<double> d(model.na(player), 0.0);
  d[action] = 1.0;
  for (int aoh : support) rule.probs[aoh] = d;
  return rule;
}

/// Decision rules for consecutive steps t0 .. t0 + rules.size() - 1.
struct BehavioralStrategy {
  int player = 1;
  int first_step = 0;
  std::vector<DecisionRule> rules;

  const DecisionRule& rule_at(int step) const {
    return rules.at(static_cast<size_t>(step - first_step));
  }
  bool covers(int step) const {
    return step >= first_step &&
           step < first_step + static_cast<int>(rules.size());
  }
};

// ---------------------------------------------------------------------------
// HMM belief filtering
// ---------------------------------------------------------------------------

/// One filtering step: from b(s | theta) to b(s' | theta, a, z).
/// Returns nullopt when the joint (a1, a2, z1, z2) extension has zero
/// probability under the model dynamics.
inline std::optional<Belief> filter_step(const PosgModel& model,
                                         const Belief& b, int a1, int a2,
                                         int z1, int z2) {
  Belief next(model.ns(), 0.0);
  double mass = 0.0;
  for (int s = 0; s < model.ns(); ++s) {
    if (b[s] == 0.0) continue;
    for (int s2 = 0; s2 < model.ns(); ++s2) {
      double p = b[s] * model.prob(s, a1, a2, s2, z1, z2);
      next[s2] += p;
      mass += p;
    }
  }
  if (mass <= 0.0) return std::nullopt;
  for (double& p : next) p /= mass;
  return next;
}

/// Forward HMM filtering of a joint AOH pair from b0. Returns nullopt when
/// the joint history is unreachable under every strategy profile.
inline std::optional<Belief> filter_belief(const PosgModel& model, int aoh1,
                                           int aoh2) {
  if (aohs().length(aoh1) != aohs().length(aoh2))
    throw DataError("joint AOH components have mismatched lengths");
  auto e1 = aohs().entries(aoh1);
  auto e2 = aohs().entries(aoh2);
  Belief b = model.b0;
  for (size_t t = 0; t < e1.size(); ++t) {
    auto next =
        filter_step(model, b, e1[t].first, e2[t].first, e1[t].second,
                    e2[t].second);
    if (!next) return std::nullopt;
    b = *next;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Model sources: JSON files, builtins, random instances
// ---------------------------------------------------------------------------

inline int name_index(const std::vector<std::string>& names,
                      const std::string& name, const char* what) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end())
    throw DataError(std::string("unknown ") + what + ": " + name);
  return static_cast<int>(it - names.begin());
}

inline PosgModel model_from_json(const nlohmann::json& j) {
  PosgModel m;
  try {
    m.states = j.at("states").get<std::vector<std::string>>();
    auto acts = j.at("actions");
    m.actions1 = acts.at(0).get<std::vector<std::string>>();
    m.actions2 = acts.at(1).get<std::vector<std::string>>();
    auto obs = j.at("observations");
    m.obs1 = obs.at(0).get<std::vector<std::string>>();
    m.obs2 = obs.at(1).get<std::vector<std::string>>();
    m.horizon = j.at("horizon").get<int>();
    m.discount = j.value("discount", 1.0);
    m.allocate();
    auto start = j.at("start").get<std::vector<double>>();
    if (start.size() != m.states.size())
      throw DataError("start vector size does not match states");
    m.b0 = start;
    for (const auto& t : j.at("transitions")) {
      int s = name_index(m.states, t.at("s"), "state");
      int a1 = name_index(m.actions1, t.at("a1"), "action (player 1)");
      int a2 = name_index(m.actions2, t.at("a2"), "action (player 2)");
      int s2 = name_index(m.states, t.at("s2"), "state");
      int z1 = name_index(m.obs1, t.at("z1"), "observation (player 1)");
      int z2 = name_index(m.obs2, t.at("z2"), "observation (player 2)");
      m.trans[s][a1][a2][m.trans_index(s2, z1, z2)] = t.at("p").get<double>();
    }
    if (j.contains("rewards")) {
      for (const auto& t : j.at("rewards")) {
        int s = name_index(m.states, t.at("s"), "state");
        int a1 = name_index(m.actions1, t.at("a1"), "action (player 1)");
        int a2 = name_index(m.actions2, t.at("a2"), "action (player 2)");
        m.reward[s][a1][a2] = t.at("r").get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model parse error: ") + e.what());
  }
  m.finalize();
  return m;
}

/// Sequentialized Matching Pennies with the +2 payoff on (heads, heads):
/// an init state, deterministic transition to s_h/s_t on player 1's first
/// action, single dummy observation, H = 2.
inline PosgModel matching_pennies() {
  PosgModel m;
  m.states = {"s_i", "s_h", "s_t"};
  m.actions1 = {"a_h", "a_t"};
  m.actions2 = {"a_h", "a_t"};
  m.obs1 = {"z_n"};
  m.obs2 = {"z_n"};
  m.horizon = 2;
  m.discount = 1.0;
  m.allocate();
  m.b0 = {1.0, 0.0, 0.0};
  for (int a1 = 0; a1 < 2; ++a1) {
    for (int a2 = 0; a2 < 2; ++a2) {
      // From s_i, player 1's action picks heads/tails; elsewhere self-loop.
      m.trans[0][a1][a2][m.trans_index(a1 == 0 ? 1 : 2, 0, 0)] = 1.0;
      m.trans[1][a1][a2][m.trans_index(1, 0, 0)] = 1.0;
      m.trans[2][a1][a2][m.trans_index(2, 0, 0)] = 1.0;
    }
  }
  for (int a1 = 0; a1 < 2; ++a1) {
    m.reward[1][a1][0] = 2.0;   // r(s_h, ., a_h)
    m.reward[1][a1][1] = -1.0;  // r(s_h, ., a_t)
    m.reward[2][a1][0] = -1.0;  // r(s_t, ., a_h)
    m.reward[2][a1][1] = 1.0;   // r(s_t, ., a_t)
  }
  m.finalize();
  return m;
}

/// Deterministic-in-seed random model; kernel rows renormalized exactly,
/// rewards in [-1, 1].
inline PosgModel build_random_model(unsigned seed, int n_states, int n_actions,
                                    int n_obs, int horizon) {
  if (n_states < 1 || n_actions < 1 || n_obs < 1 || horizon < 1)
    throw DataError("random model sizes must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PosgModel m;
  auto names = [](const char* prefix, int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
  };
  m.states = names("s", n_states);
  m.actions1 = names("a", n_actions);
  m.actions2 = names("b", n_actions);
  m.obs1 = names("x", n_obs);
  m.obs2 = names("y", n_obs);
  m.horizon = horizon;
  m.discount = 1.0;
  m.allocate();
  double b0_sum = 0.0;
  for (double& p : m.b0) {
    p = unit(rng) + 1e-3;
    b0_sum += p;
  }
  for (double& p : m.b0) p /= b0_sum;
  for (int s = 0; s < n_states; ++s) {
    for (int a1 = 0; a1 < n_actions; ++a1) {
      for (int a2 = 0; a2 < n_actions; ++a2) {
        auto& row = m.trans[s][a1][a2];
        double sum = 0.0;
        for (double& p : row) {
          p = unit(rng);
          sum += p;
        }
        for (double& p : row) p /= sum;
        m.reward[s][a1][a2] = 2.0 * unit(rng) - 1.0;
      }
    }
  }
  m.finalize();
  return m;
}

/// Loads a model from a file path or a "builtin:..." id.
/// Builtins: "builtin:matching_pennies" and
/// "builtin:random:<seed>:<S>x<A>x<Z>x<H>".
inline PosgModel load_model(const std::string& source) {
  const std::string builtin_prefix = "builtin:";
  if (source.rfind(builtin_prefix, 0) == 0) {
    std::string id = source.substr(builtin_prefix.size());
    if (id == "matching_pennies") return matching_pennies();
    const std::string random_prefix = "random:";
    if (id.rfind(random_prefix, 0) == 0) {
      std::string spec = id.substr(random_prefix.size());
      unsigned seed;
      int ns, na, nz, h;
      char colon, x1, x2, x3;
      std::istringstream ss(spec);
      if (!(ss >> seed >> colon >> ns >> x1 >> na >> x2 >> nz >> x3 >> h) ||
          colon != ':' || x1 != 'x' || x2 != 'x' || x3 != 'x')
        throw DataError("malformed random builtin id: " + source);
      return build_random_model(seed, ns, na, nz, h);
    }
    throw DataError("unknown builtin model: " + source);
  }
  std::ifstream in(source);
  if (!in) throw DataError("cannot open model file: " + source);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model parse error in ") + source + ": " +
                    e.what());
  }
  return model_from_json(j);
}

}  // namespace posg
