#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "posg/eval.hpp"
#include "posg/hsvi.hpp"
#include "posg/strategy.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitConverged = 0;
constexpr int kExitBudget = 2;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;
constexpr int kExitInternal = 70;

struct SolveOptions {
  std::string model;
  int horizon = 0;  // 0 = model's own
  double epsilon_frac = 0.0;
  double epsilon_abs = 0.0;
  std::string rho = "auto";
  std::string lambda = "paper";
  std::string eval_every = "end";
  double max_seconds = -1.0;  // < 0 = unlimited
  long max_iterations = 100000;
  unsigned seed = 0;
  std::string out_dir;
  bool convert = false;
};

posg::PosgModel load(const SolveOptions& opt) {
  posg::PosgModel model = posg::load_model(opt.model);
  if (opt.horizon > 0) {
    model.horizon = opt.horizon;
    model.finalize();
  }
  return model;
}

posg::SolverConfig make_config(const posg::PosgModel& model,
                               const SolveOptions& opt) {
  posg::SolverConfig cfg;
  if (opt.epsilon_abs > 0.0) {
    cfg.epsilon = opt.epsilon_abs;
  } else {
    double frac = opt.epsilon_frac > 0.0 ? opt.epsilon_frac : 0.01;
    cfg.epsilon = frac * model.horizon * model.reward_span();
  }
  if (opt.rho != "auto") cfg.rho = std::stod(opt.rho);
  if (opt.lambda == "theorem")
    cfg.lambda_mode = posg::LambdaMode::kTheorem;
  else if (opt.lambda != "paper")
    throw posg::DataError("unknown lambda mode: " + opt.lambda);
  if (opt.eval_every != "end") cfg.eval_every = std::stol(opt.eval_every);
  if (opt.max_seconds >= 0.0) cfg.max_seconds = opt.max_seconds;
  cfg.max_iterations = opt.max_iterations;
  cfg.seed = opt.seed;
  return cfg;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << std::setprecision(17) << j.dump(2) << "\n";
}

std::string csv_number(double v) {
  std::ostringstream ss;
  ss << std::setprecision(6) << v;
  return ss.str();
}

int cmd_solve(const SolveOptions& opt) {
  posg::PosgModel model = load(opt);
  posg::SolverConfig cfg = make_config(model, opt);
  auto start = std::chrono::steady_clock::now();
  posg::SolveResult result = posg::solve(model, cfg);
  double wall_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();

  std::cout << "value interval: [" << result.lower0 << ", " << result.upper0
            << "]  width " << result.upper0 - result.lower0
            << (result.converged ? "" : "  (budget stop, partial result)")
            << "\n";

  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    std::filesystem::path dir(opt.out_dir);
    write_json(dir / "runlog.json", posg::runlog_to_json(result.log));
    nlohmann::json manifest = {
        {"model", opt.model},
        {"version", kVersion},
        {"seed", opt.seed},
        {"epsilon", cfg.epsilon},
        {"rho", opt.rho},
        {"lambda", opt.lambda},
        {"max_iterations", opt.max_iterations},
        {"max_seconds", opt.max_seconds},
        {"wall_seconds", wall_s},
        {"outcome", result.converged ? "converged" : "budget"},
        {"upper0", result.upper0},
        {"lower0", result.lower0}};
    write_json(dir / "manifest.json", manifest);
    if (result.psi1)
      write_json(dir / "psi1.json", posg::tree_to_json(model, *result.psi1));
    if (result.psi2)
      write_json(dir / "psi2.json", posg::tree_to_json(model, *result.psi2));
    if (opt.convert && result.psi1 && result.psi2) {
      auto b1 =
          posg::tree_to_behavioral(model, *result.psi1, model.horizon - 1);
      auto b2 =
          posg::tree_to_behavioral(model, *result.psi2, model.horizon - 1);
      write_json(dir / "beta1.json", posg::behavioral_to_json(model, b1));
      write_json(dir / "beta2.json", posg::behavioral_to_json(model, b2));
    }
  }
  return result.converged ? kExitConverged : kExitBudget;
}

int cmd_oracle(const std::string& model_src) {
  posg::PosgModel model = posg::load_model(model_src);
  posg::OracleResult oracle = posg::sflp_oracle(model);
  std::cout << std::setprecision(17) << oracle.value << "\n";
  return kExitConverged;
}

int cmd_eval(const std::string& model_src, const std::string& beta1_path,
             const std::string& beta2_path) {
  posg::PosgModel model = posg::load_model(model_src);
  auto read = [&](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw posg::DataError("cannot open strategy file: " + path);
    nlohmann::json j;
    in >> j;
    return posg::behavioral_from_json(model, j);
  };
  posg::BehavioralStrategy b1 = read(beta1_path);
  posg::BehavioralStrategy b2 = read(beta2_path);
  posg::OccupancyState sigma0 = posg::initial_occupancy(model);
  double nu2 =
      posg::best_response(model, sigma0, 1, posg::Opponent::from(b2)).value;
  double nu1 =
      posg::best_response(model, sigma0, 2, posg::Opponent::from(b1)).value;
  std::cout << std::setprecision(17) << posg::eval_to_json(model, nu1, nu2).dump(2)
            << "\n";
  return kExitConverged;
}

int cmd_bench(const std::vector<std::string>& models, double epsilon_frac,
              double max_seconds) {
  std::cout << "model,status,iterations,wall_ms,gap,value_lo,value_hi\n";
  for (const auto& src : models) {
    posg::PosgModel model = posg::load_model(src);
    posg::SolverConfig cfg;
    cfg.epsilon = epsilon_frac * model.horizon * model.reward_span();
    if (max_seconds >= 0.0) cfg.max_seconds = max_seconds;
    auto start = std::chrono::steady_clock::now();
    posg::SolveResult result = posg::solve(model, cfg);
    double ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    std::cout << src << "," << (result.converged ? "converged" : "timeout")
              << "," << result.log.records.size() - 1 << "," << csv_number(ms)
              << "," << csv_number(result.upper0 - result.lower0) << ","
              << csv_number(result.lower0) << "," << csv_number(result.upper0)
              << "\n";
  }
  return kExitConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline solver for finite-horizon two-player zero-sum POSGs"};
  app.require_subcommand(1);

  SolveOptions sopt;
  auto* solve = app.add_subcommand("solve", "Run the HSVI solver");
  solve->add_option("--model", sopt.model, "Model file or builtin id")
      ->required();
  solve->add_option("--horizon", sopt.horizon, "Horizon override");
  solve->add_option("--epsilon-frac", sopt.epsilon_frac,
                    "Target gap as a fraction of the initial gap");
  solve->add_option("--epsilon-abs", sopt.epsilon_abs, "Absolute target gap");
  solve->add_option("--rho", sopt.rho, "Exploration radius or 'auto'");
  solve->add_option("--lambda", sopt.lambda, "Lipschitz mode: paper|theorem");
  solve->add_option("--eval-every", sopt.eval_every,
                    "Exploitability cadence: N or 'end'");
  solve->add_option("--max-seconds", sopt.max_seconds, "Wall-clock budget");
  solve->add_option("--max-iterations", sopt.max_iterations,
                    "Iteration budget");
  solve->add_option("--seed", sopt.seed, "RNG seed");
  solve->add_option("--out", sopt.out_dir, "Output directory");
  solve->add_flag("--convert-strategies", sopt.convert,
                  "Also write behavioral conversions");

  std::string omodel;
  auto* oracle = app.add_subcommand("oracle", "Print the exact game value");
  oracle->add_option("--model", omodel, "Model file or builtin id")
      ->required();

  std::string emodel, ebeta1, ebeta2;
  auto* eval = app.add_subcommand("eval", "Evaluate a strategy profile");
  eval->add_option("--model", emodel, "Model file or builtin id")->required();
  eval->add_option("--beta1", ebeta1, "Player 1 behavioral strategy JSON")
      ->required();
  eval->add_option("--beta2", ebeta2, "Player 2 behavioral strategy JSON")
      ->required();

  std::vector<std::string> bmodels;
  double bfrac = 0.01, bseconds = -1.0;
  auto* bench = app.add_subcommand("bench", "Time-to-gap table over models");
  bench->add_option("--model", bmodels, "Model file or builtin id (repeat)")
      ->required();
  bench->add_option("--epsilon-frac", bfrac, "Target gap fraction");
  bench->add_option("--max-seconds", bseconds, "Per-model budget");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*solve) return cmd_solve(sopt);
    if (*oracle) return cmd_oracle(omodel);
    if (*eval) return cmd_eval(emodel, ebeta1, ebeta2);
    if (*bench) return cmd_bench(bmodels, bfrac, bseconds);
  } catch (const std::invalid_argument& e) {
    std::cerr << "bad flag value: " << e.what() << "\n";
    return kExitUsage;
  } catch (const posg::LpError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const posg::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
