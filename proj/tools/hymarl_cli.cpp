#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hymarl/gradcheck.hpp"
#include "hymarl/oracle.hpp"
#include "hymarl/plot.hpp"
#include "hymarl/train.hpp"

namespace {

hymarl::EnvParams parse_env_params(const std::vector<std::string>& items) {
  hymarl::EnvParams p;
  for (const auto& s : items) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw hymarl::ConfigError("--param expects name=value, got '" + s + "'");
    p[s.substr(0, eq)] = hymarl::detail::parse_double(s.substr(0, eq), s.substr(eq + 1));
  }
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent learning with hybrid discrete-continuous actions"};
  app.require_subcommand(1);

  std::string algo, env, config_path, out_dir;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train an algorithm and write metrics and a checkpoint");
  train->add_option("--algo", algo, "pdqn | mapqn | mahhqn")->required();
  train->add_option("--env", env, "Environment name")->required();
  train->add_option("--config", config_path, "Config file of dotted key = value lines");
  train->add_option("--seed", seed, "Random seed")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--set", overrides, "Extra key=value config override (repeatable)");
  train->add_flag("--quiet", quiet, "Do not print progress");

  std::string checkpoint;
  int episodes = 100;
  std::vector<std::string> eval_params;
  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--env", env, "Environment name")->required();
  eval->add_option("--episodes", episodes, "Episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "Random seed");
  eval->add_option("--param", eval_params, "Environment parameter name=value (defaults to the training values)");

  std::string fault;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every training loss");
  grad->add_option("--inject-fault", fault, "Flip the sign of one loss gradient")->group("");

  int grid = 5;
  int lattice = 9;
  std::vector<std::string> oracle_params;
  auto* oracle = app.add_subcommand("oracle", "Brute-force optimal return of a built-in environment");
  oracle->add_option("--env", env, "Environment name")->required();
  oracle->add_option("--grid", grid, "Grid points per continuous dimension")->required()->check(CLI::Range(2, 1000));
  oracle->add_option("--lattice", lattice, "Position lattice points per axis")->check(CLI::Range(2, 1000));
  oracle->add_option("--param", oracle_params, "Environment parameter name=value");

  std::string plot_out;
  std::vector<std::string> metrics;
  auto* plot = app.add_subcommand("plot", "Learning curves from metrics files as SVG");
  plot->add_option("--out", plot_out, "Output SVG file")->required();
  plot->add_option("metrics", metrics, "Metrics files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      hymarl::TrainConfig base;
      base.algo = algo;
      base.env = env;
      hymarl::TrainConfig cfg = config_path.empty() ? base : hymarl::load_config(config_path, base);
      cfg.set("algo", algo);
      cfg.env = env;
      cfg.seed = seed;
      for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw hymarl::ConfigError("--set expects key=value, got '" + o + "'");
        cfg.set(hymarl::detail::trim(o.substr(0, eq)), hymarl::detail::trim(o.substr(eq + 1)));
      }
      const auto res = hymarl::run_train(cfg, out_dir, quiet ? nullptr : &std::cout);
      std::cout << "final mean_return " << res.final_eval.mean_return << " success_rate "
                << res.final_eval.success_rate << "\nmetrics " << res.metrics_path.string() << "\ncheckpoint "
                << res.checkpoint_path.string() << '\n';
    } else if (*eval) {
      hymarl::EnvParams params;
      const auto header = hymarl::read_checkpoint_header(checkpoint);
      if (header.at("env").get<std::string>() == env) params = hymarl::checkpoint_env_params(checkpoint);
      for (const auto& [k, v] : parse_env_params(eval_params)) params[k] = v;
      const auto r = hymarl::run_eval(checkpoint, env, params, episodes, seed);
      std::cout << "mean_return " << r.mean_return << "\nsuccess_rate " << r.success_rate << "\nepisodes "
                << r.episodes << '\n';
    } else if (*grad) {
      hymarl::GradcheckOptions opt;
      opt.inject_fault = fault;
      const auto rep = hymarl::run_gradcheck(opt);
      for (const auto& e : rep.entries) {
        std::printf("%-4s %-26s max_rel_err %.3e  %s\n", e.report.passed ? "ok" : "FAIL", e.name.c_str(),
                    e.report.max_rel_error, e.description.c_str());
      }
      std::printf("%zu checks over %zu losses: %s\n", rep.entries.size(), hymarl::gradcheck_loss_names().size(),
                  rep.all_passed() ? "all passed" : "FAILED");
      return rep.all_passed() ? 0 : 1;
    } else if (*oracle) {
      auto e = hymarl::make_env(env, parse_env_params(oracle_params));
      hymarl::OracleOptions opt;
      opt.grid = grid;
      opt.lattice = lattice;
      const auto r = hymarl::oracle_value(*e, opt);
      std::printf("%s grid %d: optimal return %.12g\n", env.c_str(), grid, r.value);
    } else if (*plot) {
      const auto s = hymarl::plot_metrics(metrics, plot_out);
      std::cout << "wrote " << plot_out << " with " << s.curves << " curves, steps [" << s.step_min << ", "
                << s.step_max << "]\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
