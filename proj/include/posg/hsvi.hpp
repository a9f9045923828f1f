#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "posg/bounds.hpp"
#include "posg/eval.hpp"
#include "posg/games_lp.hpp"
#include "posg/occupancy.hpp"

namespace posg {

// ---------------------------------------------------------------------------
// Configuration and run log
// ---------------------------------------------------------------------------

struct SolverConfig {
  double epsilon = 0.0;  // absolute target gap
  double rho = -1.0;     // exploration radius; <= 0 picks rho_max / 2
  LambdaMode lambda_mode = LambdaMode::kPaper;
  double max_seconds = std::numeric_limits<double>::infinity();
  long max_iterations = 100000;
  long eval_every = 0;  // exploitability cadence; 0 = end only
  unsigned seed = 0;

  /// Called after the update pair at each visited step of a trajectory;
  /// `prev` and the rules are null at the trajectory root, and also whenever
  /// the visit did not publish pair tuples to the parent level (the point's
  /// stage gap was still above its threshold).
  std::function<void(int tau, const OccupancyState& sigma,
                     const OccupancyState* prev, const DecisionRule* dr1_prev,
                     const DecisionRule* dr2_prev)>
      step_observer;
};

struct IterationRecord {
  long iter = 0;
  double elapsed_ms = 0.0;
  double upper0 = 0.0;
  double lower0 = 0.0;
  int trajectory_len = 0;
  std::vector<std::size_t> set_sizes;  // |J upper|, |J lower|, |I up|, |I lo|
  std::optional<double> exploitability;
};

struct RunLog {
  std::vector<IterationRecord> records;
  double max_duality_gap = 0.0;
};

struct SolveResult {
  double upper0 = 0.0;
  double lower0 = 0.0;
  bool converged = false;
  TreeStrategyPtr psi1, psi2;
  RunLog log;
};

// ---------------------------------------------------------------------------
// Threshold and radius
// ---------------------------------------------------------------------------

/// thr(tau) = gamma^{-tau} eps - sum_{i=1..tau} 2 rho lambda_{tau-i}
/// gamma^{-i}, always via the exact sum.
inline double thr(int tau, double epsilon, double rho,
                  const LipschitzSchedule& lambdas, double gamma) {
  double value = std::pow(gamma, -tau) * epsilon;
  for (int i = 1; i <= tau; ++i)
    value -= 2.0 * rho * lambdas.at(tau - i) * std::pow(gamma, -i);
  return value;
}

/// Largest radius keeping thr(tau) > 0 for every tau <= H-1, solved from the
/// linear constraint per step.
inline double rho_max_generic(const PosgModel& model, double epsilon,
                              const LipschitzSchedule& lambdas) {
  double best = std::numeric_limits<double>::infinity();
  for (int tau = 1; tau <= model.horizon - 1; ++tau) {
    double denom = 0.0;
    for (int i = 1; i <= tau; ++i)
      denom += 2.0 * lambdas.at(tau - i) * std::pow(model.discount, -i);
    if (denom > 0.0)
      best = std::min(best, std::pow(model.discount, -tau) * epsilon / denom);
  }
  return best;
}

/// Radius bound: the closed forms (valid for the theorem-mode constants), or
/// the generic per-step solve otherwise.
inline double rho_max(const PosgModel& model, double epsilon,
                      const LipschitzSchedule& lambdas) {
  if (lambdas.mode == LambdaMode::kTheorem) {
    double span = model.reward_span();
    if (model.discount == 1.0)
      return epsilon / (span * (model.horizon + 1) * model.horizon);
    double lambda_inf = span / (2.0 * (1.0 - model.discount));
    return (1.0 - model.discount) * epsilon / (2.0 * lambda_inf);
  }
  return rho_max_generic(model, epsilon, lambdas);
}

/// Trajectory cap for discounted problems; the horizon itself when gamma = 1.
inline int trajectory_cap(const PosgModel& model, double epsilon, double rho,
                          double width0) {
  if (model.discount >= 1.0) return model.horizon;
  double lambda_inf = model.reward_span() / (2.0 * (1.0 - model.discount));
  double shift = 2.0 * rho * lambda_inf / (1.0 - model.discount);
  double num = epsilon - shift;
  double den = width0 - shift;
  if (num <= 0.0 || den <= 0.0 || num >= den) return model.horizon;
  int cap = static_cast<int>(
      std::ceil(std::log(num / den) / std::log(model.discount)));
  return std::min(model.horizon, std::max(cap, 1));
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

class HsviSolver {
 public:
  HsviSolver(const PosgModel& model, SolverConfig config)
      : model_(model), config_(std::move(config)) {
    if (config_.epsilon <= 0.0) throw DataError("epsilon must be positive");
    sets_ = init_bounds(model_, config_.lambda_mode);
    double cap = rho_max(model_, config_.epsilon, sets_.lipschitz);
    if (config_.rho <= 0.0) {
      config_.rho = cap / 2.0;
    } else if (config_.rho >= cap) {
      std::ostringstream msg;
      msg << "rho = " << config_.rho << " is outside (0, " << cap << ")";
      throw DataError(msg.str());
    }
    for (int tau = 0; tau <= model_.horizon - 1; ++tau)
      if (thr_at(tau) <= 0.0)
        throw DataError("non-positive exploration threshold at step " +
                        std::to_string(tau));
  }

  const BoundSets& bounds() const { return sets_; }
  double rho() const { return config_.rho; }
  double thr_at(int tau) const {
    return thr(tau, config_.epsilon, config_.rho, sets_.lipschitz,
               model_.discount);
  }

  SolveResult solve() {
    auto start = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
      return std::chrono::duration<double, std::milli>(
                 std::chrono::steady_clock::now() - start)
          .count();
    };
    OccupancyState sigma0 = initial_occupancy(model_);
    double width0 =
        upper_v(model_, sets_, sigma0) - lower_v(model_, sets_, sigma0);
    cap_ = trajectory_cap(model_, config_.epsilon, config_.rho, width0);

    SolveResult result;
    long iter = 0;
    while (true) {
      double up = upper_v(model_, sets_, sigma0);
      double lo = lower_v(model_, sets_, sigma0);
      IterationRecord rec;
      rec.iter = iter;
      rec.elapsed_ms = elapsed_ms();
      rec.upper0 = up;
      rec.lower0 = lo;
      rec.set_sizes = set_sizes();
      if (up - lo <= config_.epsilon) {
        result.converged = true;
        result.log.records.push_back(std::move(rec));
        break;
      }
      if (iter >= config_.max_iterations ||
          elapsed_ms() / 1000.0 >= config_.max_seconds) {
        result.log.records.push_back(std::move(rec));
        break;
      }
      rec.trajectory_len =
          explore(sigma0, 0, nullptr, nullptr, nullptr, result.log);
      if (config_.eval_every > 0 && (iter + 1) % config_.eval_every == 0)
        rec.exploitability = current_exploitability();
      result.log.records.push_back(std::move(rec));
      ++iter;
    }
    result.upper0 = result.log.records.back().upper0;
    result.lower0 = result.log.records.back().lower0;
    extract(result);
    return result;
  }

 private:
  std::vector<std::size_t> set_sizes() const {
    std::size_t ju = 0, jl = 0, iu = 0, il = 0;
    for (const auto& v : sets_.upper.v) ju += v.size();
    for (const auto& v : sets_.lower.v) jl += v.size();
    for (const auto& w : sets_.upper.w) iu += w.size();
    for (const auto& w : sets_.lower.w) il += w.size();
    return {ju, jl, iu, il};
  }

  /// One recursive trajectory step of the main loop: greedy rules from the
  /// stage LPs, descend while this point's stage gap exceeds its threshold,
  /// then refine both bound sides on the way back up.
  int explore(const OccupancyState& sigma, int tau, const OccupancyState* prev,
              const DecisionRule* dr1_prev, const DecisionRule* dr2_prev,
              RunLog& log) {
    int reached = tau;
    if (tau == model_.horizon - 1) {
      TerminalSolution ts = terminal_nes(model_, sigma);
      add_terminal_tuple(model_, sets_, true, sigma, ts.dr2);
      add_terminal_tuple(model_, sets_, false, sigma, ts.dr1);
    } else {
      auto m1 = decompose(sigma, 1).first;
      auto m2 = decompose(sigma, 2).first;
      PrimalSolution up = primal_solve(
          model_, sets_, true, build_matrix(model_, sets_, true, sigma), m1);
      PrimalSolution lo = primal_solve(
          model_, sets_, false, build_matrix(model_, sets_, false, sigma), m2);
      if (tau + 1 < cap_ && up.value - lo.value > thr_at(tau)) {
        OccupancyState next = transition(model_, sigma, up.rule, lo.rule);
        reached = explore(next, tau + 1, &sigma, &up.rule, &lo.rule, log);
      }
    }
    bool published = refine(sigma, tau, prev, dr1_prev, dr2_prev, log);
    if (config_.step_observer)
      config_.step_observer(tau, sigma, published ? prev : nullptr,
                            published ? dr1_prev : nullptr,
                            published ? dr2_prev : nullptr);
    return std::max(reached, tau + 1);
  }

  /// Update pair at sigma: dual-solve both stage games (over the sets refined
  /// deeper in the trajectory), back up nu, and append the new tuples. The V
  /// tuples are always stored; the W pair tuples feed the parent level only
  /// once this point's stage gap is within thr(tau), which is what guarantees
  /// the contraction bound gamma*thr(tau) at the pair that led here.
  bool refine(const OccupancyState& sigma, int tau, const OccupancyState* prev,
              const DecisionRule* dr1_prev, const DecisionRule* dr2_prev,
              RunLog& log) {
    Backup backups[2];
    double values[2];
    for (int i = 0; i < 2; ++i) {
      bool is_upper = i == 0;
      const BoundSide& side = sets_.side(is_upper);
      GameMatrix gm = build_matrix(model_, sets_, is_upper, sigma);
      Marginal m = decompose(sigma, side.row_player).first;
      DualSolution dual = dual_solve(model_, sets_, is_upper, gm, m);
      PrimalSolution primal = primal_solve(model_, sets_, is_upper, gm, m);
      log.max_duality_gap =
          std::max(log.max_duality_gap, std::abs(primal.value - dual.value));
      backups[i] = Backup{dual.nu, dual_to_tree(sets_, is_upper, gm, dual)};
      values[i] = dual.value;
    }
    bool publish =
        prev != nullptr && values[0] - values[1] <= thr_at(tau) + 1e-9;
    update_after_step(model_, sets_, true, sigma.step, prev, dr2_prev, sigma,
                      backups[0], publish);
    update_after_step(model_, sets_, false, sigma.step, prev, dr1_prev, sigma,
                      backups[1], publish);
    return publish;
  }

  /// epsilon-NES extraction: the best root-value tuple on each side.
  void extract(SolveResult& result) const {
    int root = aohs().root();
    auto pick = [&](const BoundSide& side) {
      const VTuple* best = nullptr;
      double best_val = 0.0;
      for (const auto& tuple : side.v.at(0)) {
        auto it = tuple.nu.find(root);
        double val =
            it == tuple.nu.end() ? nu_fallback(model_, side, 0) : it->second;
        if (!best || side.sign * val < side.sign * best_val) {
          best = &tuple;
          best_val = val;
        }
      }
      return best ? best->psi : nullptr;
    };
    result.psi2 = pick(sets_.upper);  // argmin of the upper root values
    result.psi1 = pick(sets_.lower);  // argmax of the lower root values
  }

  /// Exploitability of the currently extractable pair, evaluated through the
  /// behavioral conversions (which fill never-visited AOHs with uniform
  /// rules; the native trees only cover the occupancies they were built at).
  double current_exploitability() const {
    SolveResult tmp;
    extract(tmp);
    if (!tmp.psi1 || !tmp.psi2)
      return std::numeric_limits<double>::quiet_NaN();
    auto b1 = tree_to_behavioral(model_, *tmp.psi1, model_.horizon - 1);
    auto b2 = tree_to_behavioral(model_, *tmp.psi2, model_.horizon - 1);
    return exploitability(model_, b1, b2);
  }

  const PosgModel& model_;
  SolverConfig config_;
  BoundSets sets_;
  int cap_ = 0;
};

inline SolveResult solve(const PosgModel& model, const SolverConfig& config) {
  return HsviSolver(model, config).solve();
}

// ---------------------------------------------------------------------------
// Run log serialization
// ---------------------------------------------------------------------------

inline nlohmann::json runlog_to_json(const RunLog& log) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : log.records) {
    nlohmann::json jr = {{"iter", r.iter},
                         {"elapsed_ms", r.elapsed_ms},
                         {"upper0", r.upper0},
                         {"lower0", r.lower0},
                         {"trajectory_len", r.trajectory_len},
                         {"set_sizes", r.set_sizes}};
    if (r.exploitability) jr["exploitability"] = *r.exploitability;
    records.push_back(std::move(jr));
  }
  return {{"records", records}, {"max_duality_gap", log.max_duality_gap}};
}

}  // namespace posg
