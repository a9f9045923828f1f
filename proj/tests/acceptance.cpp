// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "posg/eval.hpp"
#include "posg/hsvi.hpp"

using namespace posg;

namespace {

int g_failures = 0;

void report(const char* name, bool ok, const std::string& detail = "") {
  std::printf("%s — %s%s%s\n", ok ? "PASS" : "FAIL", name,
              detail.empty() ? "" : ": ", detail.c_str());
  if (!ok) ++g_failures;
}

double now_s() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

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

DecisionRule random_rule(const PosgModel& m, int player, int step,
                         const std::vector<int>& support,
                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.02, 1.0);
  DecisionRule rule;
  rule.player = player;
  rule.step = step;
  for (int aoh : support) {
    std::vector<double> row(static_cast<size_t>(m.na(player)));
    double total = 0.0;
    for (double& p : row) total += (p = unit(rng));
    for (double& p : row) p /= total;
    rule.probs[aoh] = row;
  }
  return rule;
}

/// Occupancy at `step` reached by random prefix rules.
OccupancyState random_occupancy(const PosgModel& m, int step,
                                std::mt19937_64& rng) {
  auto l1 = aoh_levels(m, 1, step);
  auto l2 = aoh_levels(m, 2, step);
  OccupancyState sigma = initial_occupancy(m);
  for (int t = 0; t < step; ++t)
    sigma = transition(m, sigma, random_rule(m, 1, t, l1[(size_t)t], rng),
                       random_rule(m, 2, t, l2[(size_t)t], rng));
  return sigma;
}

BehavioralStrategy uniform_beta(const PosgModel& m, int player) {
  auto levels = aoh_levels(m, player, m.horizon - 1);
  BehavioralStrategy beta;
  beta.player = player;
  beta.first_step = 0;
  for (int t = 0; t < m.horizon; ++t)
    beta.rules.push_back(uniform_rule(m, player, t, levels[(size_t)t]));
  return beta;
}

TreeStrategyPtr random_tree(const PosgModel& m, int player, int step,
                            const std::vector<std::vector<int>>& levels,
                            std::mt19937_64& rng) {
  auto node = std::make_shared<TreeStrategy>();
  node->player = player;
  node->step = step;
  std::uniform_real_distribution<double> unit(0.1, 0.9);
  double w = unit(rng);
  for (double weight : {w, 1.0 - w}) {
    TreeStrategyPtr child;
    if (step + 1 < m.horizon)
      child = random_tree(m, player, step + 1, levels, rng);
    node->mix.push_back(
        {weight, random_rule(m, player, step, levels[(size_t)step], rng),
         child});
  }
  return node;
}

/// Worst contraction slack observed across a run, via the step observer:
/// after the W sets gain the tuples backed up at sigma_{tau}, the parent
/// point must satisfy W_hi(prev, dr1) - W_lo(prev, dr2) <= gamma*thr(tau).
struct ContractionProbe {
  double worst = -std::numeric_limits<double>::infinity();

  SolveResult run(const PosgModel& m, SolverConfig cfg) {
    HsviSolver* sp = nullptr;
    cfg.step_observer = [&](int tau, const OccupancyState&,
                            const OccupancyState* prev,
                            const DecisionRule* dr1,
                            const DecisionRule* dr2) {
      if (!prev) return;
      double hi = upper_w_value(m, sp->bounds(), *prev, *dr1);
      double lo = lower_w_value(m, sp->bounds(), *prev, *dr2);
      worst = std::max(worst, hi - lo - m.discount * sp->thr_at(tau));
    };
    HsviSolver solver(m, cfg);
    sp = &solver;
    return solver.solve();
  }
};

PosgModel sample_game(unsigned seed) {
  // 2-state, 2-action games with 1-2 observations and horizon 2-3, sized so
  // the plan-enumeration oracle stays within its guard.
  switch (seed % 3) {
    case 0: return build_random_model(9000 + seed, 2, 2, 1, 2);
    case 1: return build_random_model(9000 + seed, 2, 2, 2, 2);
    default: return build_random_model(9000 + seed, 2, 2, 1, 3);
  }
}

// --- Criteria -------------------------------------------------------------

long g_max_iterations = 0;

void golden_run() {
  PosgModel m = matching_pennies();
  SolverConfig cfg;
  cfg.epsilon = 0.06;
  ContractionProbe probe;
  double t0 = now_s();
  SolveResult res = probe.run(m, cfg);
  double wall = now_s() - t0;
  g_max_iterations = std::max(g_max_iterations, (long)res.log.records.size());

  double width = res.upper0 - res.lower0;
  double expl =
      exploitability(m, tree_to_behavioral(m, *res.psi1, m.horizon - 1),
                     tree_to_behavioral(m, *res.psi2, m.horizon - 1));
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "interval [%.4f, %.4f], exploitability %.4g, %.2fs", res.lower0,
                res.upper0, expl, wall);
  report("golden run: coin game converges onto 0.2",
         res.converged && wall < 10.0 && width <= 0.06 + 1e-9 &&
             res.lower0 <= 0.2 + 1e-9 && res.upper0 >= 0.2 - 1e-9 &&
             expl <= 0.03 + 1e-6,
         detail);
  report("LP duality within 1e-7 on every golden-run stage game",
         res.log.max_duality_gap <= 1e-7,
         "max gap " + std::to_string(res.log.max_duality_gap));
  report("contraction after every backtracked update (golden run)",
         probe.worst <= 1e-7, "worst slack " + std::to_string(probe.worst));
}

void oracle_and_solver_suite() {
  // Oracle agreement, timed separately from the solver runs.
  double oracle_s = 0.0;
  double worst_oracle = 0.0;
  std::vector<double> truths;
  for (unsigned seed = 0; seed < 50; ++seed) {
    PosgModel m = sample_game(seed);
    double t0 = now_s();
    double sf = sflp_oracle(m).value;
    double bf = brute_force_nev(m);
    oracle_s += now_s() - t0;
    worst_oracle = std::max(worst_oracle, std::abs(sf - bf));
    truths.push_back(sf);
  }
  char detail[96];
  std::snprintf(detail, sizeof detail, "max |sflp - brute| %.3g, %.2fs",
                worst_oracle, oracle_s);
  report("oracle cross-validation on 50 random games",
         worst_oracle <= 1e-7 && oracle_s < 30.0, detail);

  bool sandwich = true, monotone = true;
  double worst_contraction = -std::numeric_limits<double>::infinity();
  bool all_converged = true;
  for (unsigned seed = 0; seed < 50; ++seed) {
    PosgModel m = sample_game(seed);
    SolverConfig cfg;
    cfg.epsilon = 0.01 * m.horizon * m.reward_span();
    ContractionProbe probe;
    SolveResult res = probe.run(m, cfg);
    worst_contraction = std::max(worst_contraction, probe.worst);
    all_converged = all_converged && res.converged;
    g_max_iterations =
        std::max(g_max_iterations, (long)res.log.records.size());
    const auto& recs = res.log.records;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      sandwich = sandwich && recs[i].lower0 - 1e-6 <= truths[seed] &&
                 truths[seed] <= recs[i].upper0 + 1e-6;
      if (i + 1 < recs.size())
        monotone = monotone && recs[i + 1].upper0 <= recs[i].upper0 + 1e-9 &&
                   recs[i + 1].lower0 >= recs[i].lower0 - 1e-9;
    }
  }
  report("sandwich: bounds bracket the exact value at every iteration",
         sandwich && all_converged);
  report("monotone bound evolution across all runs", monotone);
  report("contraction after every backtracked update (50-game suite)",
         worst_contraction <= 1e-7,
         "worst slack " + std::to_string(worst_contraction));
}

void lipschitz_transition_suite() {
  std::mt19937_64 rng(41);
  int checked = 0;
  double worst = -std::numeric_limits<double>::infinity();
  while (checked < 1000) {
    PosgModel m = build_random_model(9500 + (unsigned)checked, 2, 2, 2, 3);
    auto l1s = aoh_levels(m, 1, m.horizon - 1);
    auto l2s = aoh_levels(m, 2, m.horizon - 1);
    for (int tau = 0; tau + 1 < m.horizon && checked < 1000; ++tau) {
      for (int rep = 0; rep < 5 && checked < 1000; ++rep, ++checked) {
        OccupancyState a = random_occupancy(m, tau, rng);
        OccupancyState b = random_occupancy(m, tau, rng);
        DecisionRule d1 = random_rule(m, 1, tau, l1s[(size_t)tau], rng);
        DecisionRule d2 = random_rule(m, 2, tau, l2s[(size_t)tau], rng);
        double lhs = l1_distance(transition(m, a, d1, d2),
                                 transition(m, b, d1, d2));
        worst = std::max(worst, lhs - l1_distance(a, b));
      }
    }
  }
  report("transitions are 1-Lipschitz on 1000 random triples", worst <= 1e-9,
         "worst slack " + std::to_string(worst));
}

void lipschitz_nu_suite() {
  std::mt19937_64 rng(43);
  int checked = 0;
  double worst = -std::numeric_limits<double>::infinity();
  while (checked < 200) {
    PosgModel m = build_random_model(9700 + (unsigned)checked, 2, 2, 2, 2);
    LipschitzSchedule sched = make_schedule(m, LambdaMode::kTheorem);
    BehavioralStrategy opp = uniform_beta(m, 2);
    int tau = 1;
    OccupancyState a = random_occupancy(m, tau, rng);
    OccupancyState b = random_occupancy(m, tau, rng);
    BestResponse bra = best_response(m, a, 1, Opponent::from(opp));
    BestResponse brb = best_response(m, b, 1, Opponent::from(opp));
    auto ca = decompose(a, 1).second;
    auto cb = decompose(b, 1).second;
    for (const auto& [own, nu_a] : bra.nu) {
      auto it = brb.nu.find(own);
      if (it == brb.nu.end()) continue;
      double dist = conditional_row_l1(*ca.row(own), *cb.row(own));
      worst = std::max(worst,
                       std::abs(nu_a - it->second) - sched.at(tau) * dist);
      ++checked;
    }
  }
  report("best-response values are lambda-Lipschitz in the conditional",
         worst <= 1e-9, "worst slack " + std::to_string(worst));
}

void conditional_independence_suite() {
  std::mt19937_64 rng(47);
  double worst = 0.0;
  for (int draw = 0; draw < 200; ++draw) {
    PosgModel m = build_random_model(9800 + (unsigned)draw, 2, 2, 2, 3);
    auto l1s = aoh_levels(m, 1, 1);
    auto l2s = aoh_levels(m, 2, 1);
    int tau = 1;
    OccupancyState sigma = random_occupancy(m, tau, rng);
    Conditional cond = decompose(sigma, 1).second;
    DecisionRule b2 = random_rule(m, 2, tau, l2s[(size_t)tau], rng);
    // T^{c,1} must not depend on player 1's rule: compare the next
    // conditional computed directly against the one extracted from full
    // transitions under two different player-1 rules.
    Conditional direct = transition_conditional(m, cond, b2);
    for (int rep = 0; rep < 2; ++rep) {
      DecisionRule b1 = random_rule(m, 1, tau, l1s[(size_t)tau], rng);
      Conditional via = decompose(transition(m, sigma, b1, b2), 1).second;
      for (const auto& [own, dist] : conditional_row_l1(direct, via)) {
        (void)own;
        // Rows reachable only under one rule are expected to differ in
        // presence, not in content; compare shared rows only.
        if (dist < 2.0) worst = std::max(worst, dist);
      }
    }
  }
  report("next conditionals are independent of the row player's rule",
         worst <= 1e-12, "worst row distance " + std::to_string(worst));
}

void conversion_suite() {
  std::mt19937_64 rng(53);
  double worst_br = 0.0, worst_rw = 0.0;
  for (unsigned trial = 0; trial < 20; ++trial) {
    PosgModel m = build_random_model(9900 + trial, 2, 2, 2, 3);
    auto levels = aoh_levels(m, 2, m.horizon - 1);
    TreeStrategyPtr psi = random_tree(m, 2, 0, levels, rng);
    BehavioralStrategy beta = tree_to_behavioral(m, *psi, m.horizon - 1);
    OccupancyState s0 = initial_occupancy(m);
    double vs_tree = best_response(m, s0, 1, Opponent::from(psi)).value;
    double vs_beta = best_response(m, s0, 1, Opponent::from(beta)).value;
    worst_br = std::max(worst_br, std::abs(vs_tree - vs_beta));

    RealizationWeights rws = realization_weights(*psi, m.horizon - 1);
    for (int t = 0; t + 1 < m.horizon; ++t)
      for (int theta : levels[(size_t)t])
        for (int a = 0; a < m.na(2); ++a)
          for (int z = 0; z < m.nz(2); ++z) {
            double via = 0.0;
            int child = aohs().child(theta, a, z);
            for (int a2 = 0; a2 < m.na(2); ++a2) via += rws.at(child, a2);
            worst_rw = std::max(worst_rw, std::abs(via - rws.at(theta, a)));
          }
  }
  char detail[96];
  std::snprintf(detail, sizeof detail, "BR gap %.3g, RW residual %.3g",
                worst_br, worst_rw);
  report("strategy conversion preserves security levels on 20 games",
         worst_br <= 1e-6 && worst_rw <= 1e-9, detail);
}

void threshold_suite() {
  PosgModel m = matching_pennies();
  LipschitzSchedule sched = make_schedule(m, LambdaMode::kTheorem);
  double cap = rho_max(m, 0.06, sched);
  bool positive = true;
  for (int tau = 0; tau <= m.horizon - 1; ++tau)
    positive = positive && thr(tau, 0.06, cap / 2.0, sched, 1.0) > 0.0;
  report("radius bound is 1/300 and keeps every threshold positive",
         std::abs(cap - 1.0 / 300.0) <= 1e-15 && positive,
         "rho_max " + std::to_string(cap));
}

void termination_suite() {
  report("all acceptance runs terminate below the iteration cap",
         g_max_iterations > 0 && g_max_iterations < 100000,
         "max iterations " + std::to_string(g_max_iterations));
}

}  // namespace

int main() {
  golden_run();
  oracle_and_solver_suite();
  lipschitz_transition_suite();
  lipschitz_nu_suite();
  conditional_independence_suite();
  conversion_suite();
  threshold_suite();
  termination_suite();
  std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
