#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "posg/occupancy.hpp"

using namespace posg;

namespace {

DecisionRule random_rule(const PosgModel& m, int player, int step,
                         const std::vector<int>& support,
                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  DecisionRule rule;
  rule.player = player;
  rule.step = step;
  for (int aoh : support) {
    std::vector<double> row(static_cast<size_t>(m.na(player)));
    double total = 0.0;
    for (double& p : row) {
      p = unit(rng);
      total += p;
    }
    for (double& p : row) p /= total;
    rule.probs[aoh] = row;
  }
  return rule;
}

/// All structurally possible AOHs of one player at each step (the rules in
/// these tests cover everything, reachable or not).
std::vector<std::vector<int>> aoh_levels(const PosgModel& m, int player,
                                         int depth) {
  std::vector<std::vector<int>> levels{{aohs().root()}};
  for (int t = 1; t <= depth; ++t) {
    std::vector<int> next;
    for (int parent : levels.back())
      for (int a = 0; a < m.na(player); ++a)
        for (int z = 0; z < m.nz(player); ++z)
          next.push_back(aohs().child(parent, a, z));
    levels.push_back(std::move(next));
  }
  return levels;
}

}  // namespace

TEST_CASE("initial occupancy is the Dirac on empty histories") {
  PosgModel m = matching_pennies();
  OccupancyState s = initial_occupancy(m);
  CHECK(s.step == 0);
  REQUIRE(s.entries.size() == 1);
  CHECK(s.entries[0].aoh1 == aohs().root());
  CHECK(s.entries[0].p == doctest::Approx(1.0));
  CHECK(s.entries[0].belief[0] == doctest::Approx(1.0));
  CHECK(s.mass() == doctest::Approx(1.0));
}

TEST_CASE("matching pennies uniform transition") {
  PosgModel m = matching_pennies();
  OccupancyState s0 = initial_occupancy(m);
  DecisionRule u1 = uniform_rule(m, 1, 0, s0.support(1));
  DecisionRule u2 = uniform_rule(m, 2, 0, s0.support(2));
  OccupancyState s1 = transition(m, s0, u1, u2);
  CHECK(s1.step == 1);
  REQUIRE(s1.entries.size() == 4);
  for (const auto& e : s1.entries) CHECK(e.p == doctest::Approx(0.25));
  CHECK(s1.mass() == doctest::Approx(1.0));
}

TEST_CASE("matching pennies Dirac transition") {
  PosgModel m = matching_pennies();
  OccupancyState s0 = initial_occupancy(m);
  DecisionRule d1 = dirac_rule(m, 1, 0, s0.support(1), 0);
  DecisionRule d2 = dirac_rule(m, 2, 0, s0.support(2), 0);
  OccupancyState s1 = transition(m, s0, d1, d2);
  REQUIRE(s1.entries.size() == 1);
  CHECK(s1.entries[0].p == doctest::Approx(1.0));
  CHECK(s1.entries[0].belief[1] == doctest::Approx(1.0));  // s_h
}

TEST_CASE("transition mass is one on random models") {
  std::mt19937_64 rng(7);
  for (unsigned seed = 0; seed < 5; ++seed) {
    PosgModel m = build_random_model(seed, 3, 2, 2, 3);
    OccupancyState s = initial_occupancy(m);
    for (int t = 0; t < m.horizon; ++t) {
      DecisionRule r1 = random_rule(m, 1, t, s.support(1), rng);
      DecisionRule r2 = random_rule(m, 2, t, s.support(2), rng);
      s = transition(m, s, r1, r2);
      CHECK(s.mass() == doctest::Approx(1.0).epsilon(1e-9));
      for (const auto& e : s.entries) CHECK(e.p > 0.0);
    }
  }
}

TEST_CASE("expected reward on matching pennies") {
  PosgModel m = matching_pennies();
  OccupancyState s0 = initial_occupancy(m);
  DecisionRule u1 = uniform_rule(m, 1, 0, s0.support(1));
  DecisionRule u2 = uniform_rule(m, 2, 0, s0.support(2));
  CHECK(expected_reward(m, s0, u1, u2) == doctest::Approx(0.0));
  OccupancyState s1 = transition(m, s0, u1, u2);
  DecisionRule v1 = uniform_rule(m, 1, 1, s1.support(1));
  DecisionRule v2 = uniform_rule(m, 2, 1, s1.support(2));
  // (2 - 1 - 1 + 1) / 4 with the coin uniform.
  CHECK(expected_reward(m, s1, v1, v2) == doctest::Approx(0.25));
}

TEST_CASE("expected reward is bilinear in the rules") {
  std::mt19937_64 rng(11);
  PosgModel m = build_random_model(3, 3, 2, 2, 2);
  OccupancyState s0 = initial_occupancy(m);
  auto s1 = transition(m, s0, random_rule(m, 1, 0, s0.support(1), rng),
                       random_rule(m, 2, 0, s0.support(2), rng));
  DecisionRule a = random_rule(m, 1, 1, s1.support(1), rng);
  DecisionRule b = random_rule(m, 1, 1, s1.support(1), rng);
  DecisionRule opp = random_rule(m, 2, 1, s1.support(2), rng);
  DecisionRule mix = a;
  for (auto& [aoh, row] : mix.probs)
    for (std::size_t i = 0; i < row.size(); ++i)
      row[i] = 0.5 * row[i] + 0.5 * b.probs.at(aoh)[i];
  double lhs = expected_reward(m, s1, mix, opp);
  double rhs = 0.5 * expected_reward(m, s1, a, opp) +
               0.5 * expected_reward(m, s1, b, opp);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("decompose and recompose") {
  PosgModel m = matching_pennies();
  OccupancyState s0 = initial_occupancy(m);
  DecisionRule u1 = uniform_rule(m, 1, 0, s0.support(1));
  DecisionRule u2 = uniform_rule(m, 2, 0, s0.support(2));
  OccupancyState s1 = transition(m, s0, u1, u2);
  auto [mar, cond] = decompose(s1, 1);
  REQUIRE(mar.probs.size() == 2);
  for (const auto& [aoh, p] : mar.probs) {
    CHECK(p == doctest::Approx(0.5));
    const auto* row = cond.row(aoh);
    REQUIRE(row);
    for (const auto& cell : *row) CHECK(cell.p == doctest::Approx(0.5));
  }
  // Entrywise recomposition.
  for (const auto& e : s1.entries) {
    double c = 0.0;
    for (const auto& cell : *cond.row(e.aoh1))
      if (cell.other == e.aoh2) c = cell.p;
    CHECK(mar.probs[e.aoh1] * c == doctest::Approx(e.p).epsilon(1e-12));
  }
}

TEST_CASE("decompose of a Dirac occupancy") {
  PosgModel m = matching_pennies();
  OccupancyState s0 = initial_occupancy(m);
  DecisionRule d1 = dirac_rule(m, 1, 0, s0.support(1), 0);
  DecisionRule d2 = dirac_rule(m, 2, 0, s0.support(2), 1);
  OccupancyState s1 = transition(m, s0, d1, d2);
  auto [mar, cond] = decompose(s1, 2);
  REQUIRE(mar.probs.size() == 1);
  CHECK(mar.probs.begin()->second == doctest::Approx(1.0));
  CHECK(cond.rows.begin()->second.size() == 1);
}

TEST_CASE("marginal and conditional transitions match the joint") {
  std::mt19937_64 rng(23);
  for (unsigned seed = 0; seed < 6; ++seed) {
    PosgModel m = build_random_model(seed + 50, 3, 2, 2, 3);
    OccupancyState s = initial_occupancy(m);
    for (int t = 0; t < 2; ++t) {
      DecisionRule r1 = random_rule(m, 1, t, s.support(1), rng);
      DecisionRule r2 = random_rule(m, 2, t, s.support(2), rng);
      OccupancyState next = transition(m, s, r1, r2);
      for (int player : {1, 2}) {
        Marginal fast = transition_marginal(m, s, r1, r2, player);
        auto [slow, slow_cond] = decompose(next, player);
        for (const auto& [aoh, p] : slow.probs)
          CHECK(fast.at(aoh) == doctest::Approx(p).epsilon(1e-9));
        Conditional fast_cond = transition_conditional(
            m, decompose(s, player).second, player == 1 ? r2 : r1);
        for (const auto& [own, cells] : slow_cond.rows) {
          const auto* frow = fast_cond.row(own);
          REQUIRE(frow);
          CHECK(conditional_row_l1(cells, *frow) ==
                doctest::Approx(0.0).epsilon(1e-9));
        }
      }
      s = next;
    }
  }
}

TEST_CASE("conditional transition ignores the row player's rule") {
  std::mt19937_64 rng(31);
  PosgModel m = build_random_model(9, 3, 2, 2, 3);
  OccupancyState s0 = initial_occupancy(m);
  auto s1 = transition(m, s0, random_rule(m, 1, 0, s0.support(1), rng),
                       random_rule(m, 2, 0, s0.support(2), rng));
  Conditional c1 = decompose(s1, 1).second;
  DecisionRule opp = random_rule(m, 2, 1, s1.support(2), rng);
  Conditional out = transition_conditional(m, c1, opp);
  // Re-mix the marginal: scale joint masses per own AOH. The conditional,
  // and hence its transition, must not change.
  OccupancyState scaled = s1;
  std::map<int, double> factor;
  double f = 0.3;
  for (int own : s1.support(1)) factor[own] = (f += 0.4);
  double total = 0.0;
  for (auto& e : scaled.entries) total += (e.p *= factor[e.aoh1]);
  for (auto& e : scaled.entries) e.p /= total;
  Conditional c2 = decompose(scaled, 1).second;
  Conditional out2 = transition_conditional(m, c2, opp);
  for (const auto& [own, cells] : out.rows) {
    const auto* other = out2.row(own);
    REQUIRE(other);
    CHECK(conditional_row_l1(cells, *other) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("L1 distances") {
  PosgModel m = matching_pennies();
  OccupancyState s0 = initial_occupancy(m);
  DecisionRule d1 = dirac_rule(m, 1, 0, s0.support(1), 0);
  DecisionRule d1b = dirac_rule(m, 1, 0, s0.support(1), 1);
  DecisionRule d2 = dirac_rule(m, 2, 0, s0.support(2), 0);
  OccupancyState a = transition(m, s0, d1, d2);
  OccupancyState b = transition(m, s0, d1b, d2);
  CHECK(l1_distance(a, a) == doctest::Approx(0.0));
  CHECK(l1_distance(a, b) == doctest::Approx(2.0));
  CHECK(l1_distance(a, b) == doctest::Approx(l1_distance(b, a)));
  CHECK_THROWS_AS(l1_distance(a, s0), DataError);
}

TEST_CASE("transition is 1-Lipschitz in the occupancy state") {
  std::mt19937_64 rng(47);
  for (unsigned seed = 0; seed < 8; ++seed) {
    PosgModel m = build_random_model(seed + 200, 3, 2, 2, 3);
    OccupancyState s0 = initial_occupancy(m);
    auto sa = transition(m, s0, random_rule(m, 1, 0, s0.support(1), rng),
                         random_rule(m, 2, 0, s0.support(2), rng));
    auto sb = transition(m, s0, random_rule(m, 1, 0, s0.support(1), rng),
                         random_rule(m, 2, 0, s0.support(2), rng));
    auto levels1 = aoh_levels(m, 1, 1);
    auto levels2 = aoh_levels(m, 2, 1);
    DecisionRule r1 = random_rule(m, 1, 1, levels1[1], rng);
    DecisionRule r2 = random_rule(m, 2, 1, levels2[1], rng);
    double lhs = l1_distance(transition(m, sa, r1, r2),
                             transition(m, sb, r1, r2));
    CHECK(lhs <= l1_distance(sa, sb) + 1e-9);
  }
}

TEST_CASE("transition is linear in the rules") {
  std::mt19937_64 rng(53);
  PosgModel m = build_random_model(77, 3, 2, 2, 2);
  OccupancyState s0 = initial_occupancy(m);
  DecisionRule a = random_rule(m, 1, 0, s0.support(1), rng);
  DecisionRule b = random_rule(m, 1, 0, s0.support(1), rng);
  DecisionRule opp = random_rule(m, 2, 0, s0.support(2), rng);
  double alpha = 0.3;
  DecisionRule mix = a;
  for (auto& [aoh, row] : mix.probs)
    for (std::size_t i = 0; i < row.size(); ++i)
      row[i] = alpha * row[i] + (1 - alpha) * b.probs.at(aoh)[i];
  OccupancyState sm = transition(m, s0, mix, opp);
  OccupancyState sa = transition(m, s0, a, opp);
  OccupancyState sb = transition(m, s0, b, opp);
  for (const auto& e : sm.entries) {
    const auto* ea = sa.find(e.aoh1, e.aoh2);
    const auto* eb = sb.find(e.aoh1, e.aoh2);
    double expect = alpha * (ea ? ea->p : 0.0) + (1 - alpha) * (eb ? eb->p : 0.0);
    CHECK(e.p == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("sufficiency against a full-profile roll-forward") {
  std::mt19937_64 rng(61);
  for (unsigned seed = 0; seed < 5; ++seed) {
    PosgModel m = build_random_model(seed + 300, 3, 2, 2, 3);
    // Rules defined on all structurally possible AOHs per step.
    auto levels1 = aoh_levels(m, 1, m.horizon - 1);
    auto levels2 = aoh_levels(m, 2, m.horizon - 1);
    std::vector<DecisionRule> r1, r2;
    for (int t = 0; t < m.horizon; ++t) {
      r1.push_back(random_rule(m, 1, t, levels1[(size_t)t], rng));
      r2.push_back(random_rule(m, 2, t, levels2[(size_t)t], rng));
    }
    // Ground truth: carry (s, theta1, theta2) weights through the profile.
    std::map<std::tuple<int, int, int>, double> items;
    for (int s = 0; s < m.ns(); ++s)
      if (m.b0[s] > 0) items[{s, aohs().root(), aohs().root()}] = m.b0[s];
    OccupancyState sigma = initial_occupancy(m);
    for (int t = 0; t < m.horizon; ++t) {
      double truth = 0.0;
      std::map<std::tuple<int, int, int>, double> next;
      for (const auto& [key, w] : items) {
        auto [s, t1, t2] = key;
        const auto& row1 = r1[(size_t)t].probs.at(t1);
        const auto& row2 = r2[(size_t)t].probs.at(t2);
        for (int a1 = 0; a1 < m.na(1); ++a1)
          for (int a2 = 0; a2 < m.na(2); ++a2) {
            double wa = w * row1[(size_t)a1] * row2[(size_t)a2];
            if (wa == 0.0) continue;
            truth += wa * m.r(s, a1, a2);
            for (int s2 = 0; s2 < m.ns(); ++s2)
              for (int z1 = 0; z1 < m.nz(1); ++z1)
                for (int z2 = 0; z2 < m.nz(2); ++z2) {
                  double p = wa * m.prob(s, a1, a2, s2, z1, z2);
                  if (p > 0)
                    next[{s2, aohs().child(t1, a1, z1),
                          aohs().child(t2, a2, z2)}] += p;
                }
          }
      }
      CHECK(expected_reward(m, sigma, r1[(size_t)t], r2[(size_t)t]) ==
            doctest::Approx(truth).epsilon(1e-9));
      if (t + 1 == m.horizon) break;
      sigma = transition(m, sigma, r1[(size_t)t], r2[(size_t)t]);
      items = std::move(next);
      // Occupancy masses must match the rolled-forward joint marginals.
      std::map<std::pair<int, int>, double> joint;
      for (const auto& [key, w] : items)
        joint[{std::get<1>(key), std::get<2>(key)}] += w;
      for (const auto& e : sigma.entries)
        CHECK(e.p == doctest::Approx(joint[{e.aoh1, e.aoh2}]).epsilon(1e-9));
    }
  }
}

TEST_CASE("occupancy JSON dump") {
  PosgModel m = matching_pennies();
  OccupancyState s0 = initial_occupancy(m);
  auto j = occupancy_to_json(m, s0);
  CHECK(j["step"] == 0);
  CHECK(j["entries"].size() == 1);
  CHECK(j["entries"][0]["p"] == doctest::Approx(1.0));
}
