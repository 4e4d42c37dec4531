// colf: train / eval / export front end.

#include "colf/env/scenario_io.hpp"
#include "colf/exp/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace colf;
namespace fs = std::filesystem;

namespace {

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> iterations;
  std::string method;
};

struct EvalArgs {
  std::vector<std::string> ckpts;
  std::string scenario = "one_goal";
  int trials = 100;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string perception = "vector";
  double p_wrong = 0.0;
  double noise = 0.0;
  bool sample = false;
  bool point_goals = false;
  std::string depth = "surface";
  int threads = 0;
  std::string out;
};

struct ExportArgs {
  std::string run;
  int trial = 0;
  std::string out;
};

int run_train(const TrainArgs& a) {
  exp::RunConfig c = exp::load_run_config(a.config);
  if (!a.method.empty()) {
    c.method = exp::parse_method(a.method);
    exp::apply_method(c.method, c.train);
  }
  if (a.seed) c.train.seed = *a.seed;
  if (!a.out.empty()) c.out_dir = a.out;
  if (a.iterations) c.iterations = *a.iterations;
  const auto res = exp::cmd_train(c, [](const mappo::IterationStats& s) {
    if (s.iteration % 10 == 0)
      exp::log(exp::LogLevel::info, "iter " + std::to_string(s.iteration) +
                                        " r_obj " + std::to_string(s.object_reward_mean));
    return true;
  });
  std::cout << (res.aborted ? "aborted (non-finite loss); last good state: " : "final checkpoint: ")
            << res.final_checkpoint.string() << "\nmetrics: " << res.metrics_csv.string() << "\n";
  return res.aborted ? 2 : 0;
}

int run_eval(const EvalArgs& a) {
  exp::EvalOptions o;
  o.scenario = env::load_scenario(a.scenario);
  o.trials = a.trials;
  o.perception = exp::parse_perception(a.perception);
  o.follower_misalignment.p_wrong = a.p_wrong;
  o.follower_misalignment.noise_std = a.noise;
  o.act_mode = a.sample ? policy::ActMode::sample : policy::ActMode::mean;
  o.cylinder_goals = !a.point_goals;
  if (a.depth == "centre")
    o.render.depth = grounding::DepthRender::entity_centre;
  else if (a.depth != "surface")
    throw ContractViolation("--depth must be surface or centre");
  o.threads = a.threads;
  if (!a.out.empty()) o.log_dir = a.out;

  // One checkpoint for every seed, or one per seed in order.
  if (a.ckpts.size() != 1 && a.ckpts.size() != a.seeds.size())
    throw ContractViolation("eval: give one --ckpt, or one per seed");
  std::vector<exp::EvalUnit> units;
  for (std::size_t i = 0; i < a.seeds.size(); ++i)
    units.push_back({a.seeds[i], a.ckpts.size() == 1 ? a.ckpts[0] : a.ckpts[i]});

  const exp::EvalReport r = exp::cmd_eval(units, o);
  const auto j = exp::to_json(r);
  std::cout << j.dump(2) << "\n";
  if (!a.out.empty()) {
    std::ofstream f(fs::path(a.out) / "eval_report.json");
    f << j.dump(2) << "\n";
  }
  return 0;
}

int run_export(const ExportArgs& a) {
  const fs::path p = exp::cmd_export(a.run, a.trial, a.out);
  std::cout << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leader-follower cooperative transport: train, evaluate, export"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a method and write checkpoints and metrics.csv");
  train->add_option("--config", ta.config, "TOML run config")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", ta.seed, "Training seed (overrides train.seed)");
  train->add_option("--out", ta.out, "Output directory (overrides out_dir)");
  train->add_option("--iterations", ta.iterations, "PPO iterations (overrides iterations)");
  train->add_option("--method", ta.method, "mappo | mappo_aac | colf | colf_no_aac | colf_no_ce");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints; prints an EvalReport as JSON");
  eval->add_option("--ckpt", ea.ckpts, "Checkpoint (repeat once per seed, or give one)")->required();
  eval->add_option("--scenario", ea.scenario, "Preset name or TOML file");
  eval->add_option("--trials", ea.trials, "Trials per seed");
  eval->add_option("--seeds", ea.seeds, "Seeds, e.g. --seeds 0 1 2");
  eval->add_option("--perception", ea.perception, "vector | grounded");
  eval->add_option("--p-wrong", ea.p_wrong, "Follower wrong-landmark probability");
  eval->add_option("--noise", ea.noise, "Follower estimate noise std (m)");
  eval->add_flag("--sample", ea.sample, "Sample actions instead of using the mean");
  eval->add_flag("--point-goals", ea.point_goals, "Keep point goals (default: solid cylinders)");
  eval->add_option("--depth", ea.depth, "Synthetic depth: surface | centre");
  eval->add_option("--threads", ea.threads, "Worker threads (0 = all cores)");
  eval->add_option("--out", ea.out, "Directory for trial logs and eval_report.json");

  ExportArgs xa;
  auto* exp_cmd = app.add_subcommand("export", "Write one trial log as line-delimited JSON");
  exp_cmd->add_option("--run", xa.run, "Eval output directory")->required();
  exp_cmd->add_option("--trial", xa.trial, "Trial id")->required();
  exp_cmd->add_option("--out", xa.out, "Output file (default <run>/trial_<n>.jsonl)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return run_train(ta);
    if (*eval) return run_eval(ea);
    if (*exp_cmd) return run_export(xa);
  } catch (const std::exception& e) {
    exp::log(exp::LogLevel::error, e.what());
    return 1;
  }
  return 0;
}
