#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "posg/bounds.hpp"

using namespace posg;

TEST_CASE("Lipschitz schedules") {
  PosgModel m = matching_pennies();  // span 3, H = 2, gamma = 1
  LipschitzSchedule paper = make_schedule(m, LambdaMode::kPaper);
  CHECK(paper.at(0) == doctest::Approx(6.0));
  CHECK(paper.at(1) == doctest::Approx(3.0));
  CHECK(paper.at(2) == doctest::Approx(0.0));
  LipschitzSchedule theorem = make_schedule(m, LambdaMode::kTheorem);
  CHECK(theorem.at(0) == doctest::Approx(3.0));
  CHECK(theorem.at(1) == doctest::Approx(1.5));
  for (std::size_t i = 0; i + 1 < paper.lambdas.size(); ++i) {
    CHECK(paper.lambdas[i] >= paper.lambdas[i + 1]);
    CHECK(paper.lambdas[i] == doctest::Approx(2.0 * theorem.lambdas[i]));
  }
}

TEST_CASE("discounted schedule uses the geometric tail") {
  PosgModel m = build_random_model(5, 2, 2, 2, 3);
  m.discount = 0.9;
  m.finalize();
  LipschitzSchedule theorem = make_schedule(m, LambdaMode::kTheorem);
  double span = m.reward_span();
  CHECK(theorem.at(0) ==
        doctest::Approx(0.5 * (1.0 - std::pow(0.9, 3)) / 0.1 * span));
  CHECK(theorem.at(2) == doctest::Approx(0.5 * 1.0 * span));
}

TEST_CASE("initial bounds on matching pennies") {
  PosgModel m = matching_pennies();
  BoundSets sets = init_bounds(m, LambdaMode::kPaper);
  OccupancyState s0 = initial_occupancy(m);
  CHECK(upper_v(m, sets, s0) == doctest::Approx(4.0));
  CHECK(lower_v(m, sets, s0) == doctest::Approx(-2.0));
  CHECK(upper_v(m, sets, s0) >= lower_v(m, sets, s0));
  // One tuple per set level; W sets only below the last step.
  CHECK(sets.upper.v[0].size() == 1);
  CHECK(sets.upper.v[1].size() == 1);
  CHECK(sets.upper.w[0].size() == 1);
  CHECK(sets.upper.w[1].empty());
  // nu at step 1 is r_max * (H - 1) = 2 for every reachable AOH.
  for (const auto& [aoh, v] : sets.upper.v[1][0].nu)
    CHECK(v == doctest::Approx(2.0));
  for (const auto& [aoh, v] : sets.lower.v[1][0].nu)
    CHECK(v == doctest::Approx(-1.0));
}

TEST_CASE("zero penalty at the tuple's own anchor") {
  PosgModel m = matching_pennies();
  BoundSets sets = init_bounds(m, LambdaMode::kPaper);
  OccupancyState s0 = initial_occupancy(m);
  DecisionRule u1 = uniform_rule(m, 1, 0, s0.support(1));
  DecisionRule u2 = uniform_rule(m, 2, 0, s0.support(2));
  OccupancyState s1 = transition(m, s0, u1, u2);
  // The init anchor at step 1 is exactly s1's conditional, so the value is
  // sigma^m . nu with no Lipschitz penalty.
  auto [mar, cond] = decompose(s1, 1);
  double expect = 0.0;
  for (const auto& [aoh, p] : mar.probs)
    expect += p * sets.upper.v[1][0].nu.at(aoh);
  CHECK(upper_v(m, sets, s1) == doctest::Approx(expect));
}

TEST_CASE("penalty kicks in away from the anchor") {
  PosgModel m = matching_pennies();
  BoundSets sets = init_bounds(m, LambdaMode::kPaper);
  OccupancyState s0 = initial_occupancy(m);
  // Against a Dirac opponent the row player's conditional rows are Dirac
  // while the anchor rows are uniform over two opponent AOHs: row distance
  // 1, lambda_1 = 3. The own-marginal side stays at its anchor.
  OccupancyState up_probe =
      transition(m, s0, uniform_rule(m, 1, 0, s0.support(1)),
                 dirac_rule(m, 2, 0, s0.support(2), 0));
  CHECK(upper_v(m, sets, up_probe) == doctest::Approx(2.0 + 3.0));
  CHECK(lower_v(m, sets, up_probe) == doctest::Approx(-1.0));
  OccupancyState lo_probe =
      transition(m, s0, dirac_rule(m, 1, 0, s0.support(1), 0),
                 uniform_rule(m, 2, 0, s0.support(2)));
  CHECK(lower_v(m, sets, lo_probe) == doctest::Approx(-1.0 - 3.0));
  CHECK(upper_v(m, sets, lo_probe) == doctest::Approx(2.0));
}

TEST_CASE("adding a tuple never raises the upper bound") {
  PosgModel m = matching_pennies();
  BoundSets sets = init_bounds(m, LambdaMode::kPaper);
  OccupancyState s0 = initial_occupancy(m);
  DecisionRule u1 = uniform_rule(m, 1, 0, s0.support(1));
  DecisionRule u2 = uniform_rule(m, 2, 0, s0.support(2));
  std::vector<OccupancyState> probes{transition(m, s0, u1, u2),
                                     transition(m, s0, dirac_rule(m, 1, 0, s0.support(1), 0), u2),
                                     transition(m, s0, u1, dirac_rule(m, 2, 0, s0.support(2), 1))};
  std::vector<double> before;
  for (const auto& p : probes) before.push_back(upper_v(m, sets, p));

  Backup backup;
  for (int aoh : probes[0].support(1)) backup.nu[aoh] = 1.0;
  backup.psi = sets.upper.v[1][0].psi;
  update_after_step(m, sets, true, 1, &s0, &u2, probes[0], backup);
  CHECK(sets.upper.v[1].size() == 2);
  CHECK(sets.upper.w[0].size() == 2);
  for (std::size_t i = 0; i < probes.size(); ++i)
    CHECK(upper_v(m, sets, probes[i]) <= before[i] + 1e-12);
  // The new tuple has zero penalty at its own anchor.
  CHECK(upper_v(m, sets, probes[0]) <= 1.0 + 1e-12);
}

TEST_CASE("update at step zero only extends the V set") {
  PosgModel m = matching_pennies();
  BoundSets sets = init_bounds(m, LambdaMode::kPaper);
  OccupancyState s0 = initial_occupancy(m);
  Backup backup;
  backup.nu[aohs().root()] = 0.5;
  backup.psi = sets.upper.v[0][0].psi;
  update_after_step(m, sets, true, 0, nullptr, nullptr, s0, backup);
  CHECK(sets.upper.v[0].size() == 2);
  CHECK(sets.upper.w[0].size() == 1);
  CHECK(upper_v(m, sets, s0) == doctest::Approx(0.5));
}

TEST_CASE("missing anchor rows get the worst-case penalty") {
  PosgModel m = matching_pennies();
  BoundSets sets = init_bounds(m, LambdaMode::kPaper);
  OccupancyState s0 = initial_occupancy(m);
  DecisionRule u1 = uniform_rule(m, 1, 0, s0.support(1));
  DecisionRule u2 = uniform_rule(m, 2, 0, s0.support(2));
  OccupancyState s1 = transition(m, s0, u1, u2);
  // A tuple anchored on a disjoint support: penalty 2 per unit mass, and nu
  // falls back to r_max * (H - tau).
  VTuple stray;
  stray.anchor.player = 1;
  stray.anchor.step = 1;
  sets.upper.v[1] = {stray};
  double lambda1 = sets.lipschitz.at(1);
  CHECK(upper_v(m, sets, s1) == doctest::Approx(2.0 + lambda1 * 2.0));
}

TEST_CASE("bound snapshot serializes") {
  PosgModel m = matching_pennies();
  BoundSets sets = init_bounds(m, LambdaMode::kTheorem);
  auto j = bounds_to_json(sets);
  CHECK(j["lambda_mode"] == "theorem");
  CHECK(j["upper"]["v"].size() == 2);
  CHECK(j["lambdas"].size() == 3);
}
