#pragma once

#include <map>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include <json.hpp>

#include "posg/model.hpp"

namespace posg {

// ---------------------------------------------------------------------------
// Tree strategies
// ---------------------------------------------------------------------------

/// psi: a distribution over stored tuples, each carrying this step's decision
/// rule and the tree strategy to switch to afterwards. Children may be shared
/// (DAG); steps strictly increase along child edges. At the last step nodes
/// have no child.
struct TreeStrategy {
  struct Node {
    double weight = 0.0;
    DecisionRule dr;
    std::shared_ptr<const TreeStrategy> child;  // null at the final step
  };

  int player = 1;
  int step = 0;
  std::vector<Node> mix;
};

using TreeStrategyPtr = std::shared_ptr<const TreeStrategy>;

inline void validate_tree(const TreeStrategy& psi) {
  double total = 0.0;
  for (const auto& n : psi.mix) {
    total += n.weight;
    if (n.child) {
      if (n.child->step != psi.step + 1)
        throw DataError("tree strategy child step mismatch");
      validate_tree(*n.child);
    }
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw DataError("tree strategy mix does not sum to 1");
}

/// Wraps a behavioral strategy as a chain of Dirac nodes.
inline TreeStrategyPtr behavioral_to_tree(const BehavioralStrategy& beta,
                                          int last_step) {
  TreeStrategyPtr next;
  for (int t = last_step; t >= beta.first_step; --t) {
    auto node = std::make_shared<TreeStrategy>();
    node->player = beta.player;
    node->step = t;
    node->mix.push_back({1.0, beta.rule_at(t), next});
    next = node;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Realization weights
// ---------------------------------------------------------------------------

/// rw^i: weight of each own sequence (theta^i_t, a^i_t) — the product of the
/// strategy's action probabilities along the sequence, marginalized over the
/// tuple mixture. Holds every level from the root step to the last.
struct RealizationWeights {
  int player = 1;
  int first_step = 0;
  int last_step = 0;
  std::map<std::pair<int, int>, double> rw;  // (aoh, action) -> weight

  double at(int aoh, int action) const {
    auto it = rw.find({aoh, action});
    return it == rw.end() ? 0.0 : it->second;
  }
};

namespace detail {

using RwMap = std::map<std::pair<int, int>, double>;

/// Deep copy of a tree with every node's decision rule completed by uniform
/// rows over the full structural AOH level of its step. Trees built during
/// solving only carry rows for the occupancy supports they were recorded at;
/// off-support rules are uniform by convention and carry no value, but the
/// realization-weight pass needs them to keep prefix weights consistent.
inline TreeStrategyPtr complete_tree(
    const PosgModel& model, const TreeStrategy& psi,
    const std::vector<std::vector<int>>& levels,
    std::map<const TreeStrategy*, TreeStrategyPtr>& memo) {
  auto it = memo.find(&psi);
  if (it != memo.end()) return it->second;
  auto out = std::make_shared<TreeStrategy>();
  out->player = psi.player;
  out->step = psi.step;
  std::vector<double> u(static_cast<size_t>(model.na(psi.player)),
                        1.0 / model.na(psi.player));
  for (const auto& node : psi.mix) {
    TreeStrategy::Node copy;
    copy.weight = node.weight;
    copy.dr = node.dr;
    for (int aoh : levels.at(static_cast<size_t>(psi.step)))
      if (!copy.dr.find(aoh)) copy.dr.probs[aoh] = u;
    if (node.child) copy.child = complete_tree(model, *node.child, levels, memo);
    out->mix.push_back(std::move(copy));
  }
  return memo.emplace(&psi, std::move(out)).first->second;
}

/// Structural AOH levels of the tree's player, grown from the AOHs the root
/// node's rules mention (their shortest one in practice: the start AOH).
inline std::vector<std::vector<int>> tree_levels(const PosgModel& model,
                                                 const TreeStrategy& psi,
                                                 int last_step) {
  std::vector<int> base;
  for (const auto& node : psi.mix)
    for (const auto& [aoh, row] : node.dr.probs) base.push_back(aoh);
  std::sort(base.begin(), base.end());
  base.erase(std::unique(base.begin(), base.end()), base.end());
  std::vector<std::vector<int>> levels(static_cast<size_t>(last_step + 1));
  levels[static_cast<size_t>(psi.step)] = base;
  for (int t = psi.step + 1; t <= last_step; ++t) {
    std::vector<int> next;
    for (int parent : levels[static_cast<size_t>(t - 1)])
      for (int a = 0; a < model.na(psi.player); ++a)
        for (int z = 0; z < model.nz(psi.player); ++z)
          next.push_back(aohs().child(parent, a, z));
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    levels[static_cast<size_t>(t)] = std::move(next);
  }
  return levels;
}

/// Phase (1) of the conversion: full-length conditional RWs of a node,
/// keyed by (last-step AOH, last action). Memoized on node identity since
/// children form a DAG.
inline const RwMap& full_length_rw(
    const TreeStrategy& psi,
    std::map<const TreeStrategy*, RwMap>& memo) {
  auto it = memo.find(&psi);
  if (it != memo.end()) return it->second;
  RwMap out;
  for (const auto& node : psi.mix) {
    if (node.weight == 0.0) continue;
    if (!node.child) {
      for (const auto& [aoh, row] : node.dr.probs)
        for (std::size_t a = 0; a < row.size(); ++a)
          if (row[a] != 0.0) out[{aoh, (int)a}] += node.weight * row[a];
      continue;
    }
    const RwMap& child_rw = full_length_rw(*node.child, memo);
    for (const auto& [key, v] : child_rw) {
      // Recover this node's (theta_t, a_t) from the sequence prefix and
      // concatenate: rwCat = beta_t(a_t | theta_t) * child rw.
      auto path = aohs().entries(key.first);
      int theta = aohs().root();
      for (int t = 0; t < psi.step; ++t)
        theta = aohs().child(theta, path[t].first, path[t].second);
      int a_t = path[psi.step].first;
      const auto* row = node.dr.find(theta);
      if (!row || (*row)[a_t] == 0.0) continue;
      out[key] += node.weight * (*row)[a_t] * v;
    }
  }
  return memo.emplace(&psi, std::move(out)).first->second;
}

}  // namespace detail

/// Phases (1)+(2): full-length conditional RWs, then marginalization down to
/// every prefix level: rw(theta, a) = sum_{a'} rw(theta, a, z, a') for any z.
inline RealizationWeights realization_weights(const TreeStrategy& psi,
                                              int last_step) {
  std::map<const TreeStrategy*, detail::RwMap> memo;
  RealizationWeights rws;
  rws.player = psi.player;
  rws.first_step = psi.step;
  rws.last_step = last_step;
  rws.rw = detail::full_length_rw(psi, memo);

  std::map<int, detail::RwMap> by_level;
  for (const auto& [key, v] : rws.rw)
    by_level[aohs().length(key.first)][key] = v;
  for (int t = last_step; t > psi.step; --t) {
    detail::RwMap& lower = by_level[t - 1];
    for (const auto& [key, v] : by_level[t]) {
      auto [a, z] = aohs().entries(key.first).back();
      int parent = aohs().parent(key.first);
      auto pk = std::make_pair(parent, a);
      if (lower.count(pk)) continue;
      // Marginalize through this observation branch; any branch gives the
      // same value when the consistency equation holds.
      double total = 0.0;
      int sibling = aohs().child(parent, a, z);
      for (const auto& [k2, v2] : by_level[t])
        if (k2.first == sibling) total += v2;
      lower[pk] = total;
    }
    for (const auto& [key, v] : by_level[t - 1]) rws.rw[key] = v;
  }
  return rws;
}

/// Phase (3): behavioral probabilities as RW ratios,
/// beta(a | theta) = rw(theta, a) / rw(parent sequence of theta),
/// with the uniform distribution wherever the denominator vanishes.
inline BehavioralStrategy tree_to_behavioral(const PosgModel& model,
                                             const TreeStrategy& psi,
                                             int last_step) {
  validate_tree(psi);
  std::map<const TreeStrategy*, TreeStrategyPtr> copies;
  TreeStrategyPtr full = detail::complete_tree(
      model, psi, detail::tree_levels(model, psi, last_step), copies);
  RealizationWeights rws = realization_weights(*full, last_step);
  int na = model.na(psi.player);
  int nz = model.nz(psi.player);

  BehavioralStrategy beta;
  beta.player = psi.player;
  beta.first_step = psi.step;

  std::map<int, std::vector<int>> level_aohs;  // step -> AOHs with a rule row
  for (const auto& [key, v] : rws.rw)
    level_aohs[aohs().length(key.first)].push_back(key.first);

  for (int t = psi.step; t <= last_step; ++t) {
    DecisionRule dr;
    dr.player = psi.player;
    dr.step = t;
    std::vector<int> level;
    if (t == psi.step) {
      auto& v = level_aohs[t];
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      level = v;
    } else {
      for (int parent : level_aohs[t - 1])
        for (int a = 0; a < na; ++a)
          for (int z = 0; z < nz; ++z)
            level.push_back(aohs().child(parent, a, z));
      std::sort(level.begin(), level.end());
      level.erase(std::unique(level.begin(), level.end()), level.end());
      level_aohs[t] = level;
    }
    for (int aoh : level) {
      double denom = t == psi.step
                         ? 1.0
                         : rws.at(aohs().parent(aoh),
                                  aohs().entries(aoh).back().first);
      std::vector<double> row(na, 1.0 / na);
      if (denom > 0.0) {
        double mass = 0.0;
        for (int a = 0; a < na; ++a) {
          row[a] = rws.at(aoh, a) / denom;
          mass += row[a];
        }
        if (mass <= 0.0) row.assign(na, 1.0 / na);
      }
      dr.probs[aoh] = row;
    }
    beta.rules.push_back(std::move(dr));
  }
  return beta;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// On-line sampler with the semantics of Fig-style tuple sampling:
/// (i) sample a tuple from the current distribution, (ii) play its decision
/// rule at the current AOH, (iii) descend to its child distribution.
class TreeExecutor {
 public:
  TreeExecutor(const PosgModel& model, TreeStrategyPtr root,
               std::mt19937_64& rng)
      : model_(model), current_(std::move(root)), rng_(rng) {}

  /// Returns the sampled action for the given own AOH and advances to the
  /// sampled tuple's child.
  int act(int aoh) {
    if (!current_) throw DataError("tree executor stepped past the last node");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng_);
    const TreeStrategy::Node* picked = &current_->mix.back();
    for (const auto& node : current_->mix) {
      u -= node.weight;
      if (u <= 0.0) {
        picked = &node;
        break;
      }
    }
    const auto* row = picked->dr.find(aoh);
    int na = model_.na(current_->player);
    double v = unif(rng_);
    int action = na - 1;
    for (int a = 0; a < na; ++a) {
      v -= row ? (*row)[a] : 1.0 / na;
      if (v <= 0.0) {
        action = a;
        break;
      }
    }
    current_ = picked->child;
    return action;
  }

 private:
  const PosgModel& model_;
  TreeStrategyPtr current_;
  std::mt19937_64& rng_;
};

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json behavioral_to_json(const PosgModel& model,
                                         const BehavioralStrategy& beta) {
  const auto& act = beta.player == 1 ? model.actions1 : model.actions2;
  const auto& obs = beta.player == 1 ? model.obs1 : model.obs2;
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& dr : beta.rules) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [aoh, row] : dr.probs)
      entries.push_back({{"aoh", format_aoh(aoh, act, obs)}, {"dist", row}});
    rules.push_back({{"t", dr.step}, {"entries", entries}});
  }
  return {{"player", beta.player},
          {"horizon", model.horizon},
          {"rules", rules}};
}

inline BehavioralStrategy behavioral_from_json(const PosgModel& model,
                                               const nlohmann::json& j) {
  BehavioralStrategy beta;
  beta.player = j.at("player").get<int>();
  const auto& act = beta.player == 1 ? model.actions1 : model.actions2;
  const auto& obs = beta.player == 1 ? model.obs1 : model.obs2;
  bool first = true;
  for (const auto& jr : j.at("rules")) {
    DecisionRule dr;
    dr.player = beta.player;
    dr.step = jr.at("t").get<int>();
    if (first) beta.first_step = dr.step, first = false;
    for (const auto& je : jr.at("entries")) {
      int aoh = parse_aoh(je.at("aoh").get<std::string>(), act, obs);
      dr.probs[aoh] = je.at("dist").get<std::vector<double>>();
    }
    beta.rules.push_back(std::move(dr));
  }
  return beta;
}

inline nlohmann::json tree_to_json(const PosgModel& model,
                                   const TreeStrategy& psi) {
  const auto& act = psi.player == 1 ? model.actions1 : model.actions2;
  const auto& obs = psi.player == 1 ? model.obs1 : model.obs2;
  nlohmann::json mix = nlohmann::json::array();
  for (const auto& node : psi.mix) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [aoh, row] : node.dr.probs)
      entries.push_back({{"aoh", format_aoh(aoh, act, obs)}, {"dist", row}});
    nlohmann::json jn = {{"weight", node.weight}, {"dr", entries}};
    if (node.child) jn["child"] = tree_to_json(model, *node.child);
    mix.push_back(std::move(jn));
  }
  return {{"player", psi.player}, {"step", psi.step}, {"mix", mix}};
}

}  // namespace posg
