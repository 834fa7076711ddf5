#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splab/errors.hpp"
#include "splab/harness/checkpoint.hpp"
#include "splab/harness/config.hpp"
#include "splab/harness/run.hpp"
#include "splab/lowrank.hpp"

namespace fs = std::filesystem;
using namespace splab;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// "key=value" overrides given with --set.
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
}

void print_eval(const std::string& label, const EvalResult& r, bool goal_env) {
  std::printf("%s mean %.4f std %.4f", label.c_str(), r.mean, r.std);
  if (goal_env) std::printf(" success %.3f", r.success_rate);
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse and low-rank policy training harness"};
  app.require_subcommand(1);

  struct {
    std::optional<fs::path> config;
    std::string env, algo, sparsity;
    std::optional<double> coeff;
    std::optional<int> episodes;
    std::optional<std::uint64_t> seed;
    fs::path out;
    std::optional<fs::path> demos;
    std::vector<std::string> sets;
  } tr;
  auto* train_cmd = app.add_subcommand("train", "Train one policy");
  train_cmd->add_option("--config", tr.config, "Base config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--env", tr.env, "cartpole | acrobot | pointreach");
  train_cmd->add_option("--algo", tr.algo, "dqn | ddqn | ppo | ddpg_her_dex");
  train_cmd->add_option("--sparsity", tr.sparsity, "none | l0 | l1 | l2");
  train_cmd->add_option("--coeff", tr.coeff, "Regularization coefficient");
  train_cmd->add_option("--episodes", tr.episodes, "Training episodes (PPO: iterations)");
  train_cmd->add_option("--seed", tr.seed, "Random seed");
  train_cmd->add_option("--out", tr.out, "Run directory")->required();
  train_cmd->add_option("--demos", tr.demos, "Expert demo file (ddpg_her_dex)")->check(CLI::ExistingFile);
  train_cmd->add_option("--set", tr.sets, "Extra key=value settings");

  struct {
    fs::path config;
    std::optional<int> workers;
    std::optional<fs::path> out;
    std::vector<std::string> sets;
  } sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train over a coefficient grid and keep the best policy");
  sweep_cmd->add_option("--config", sw.config, "Config file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--workers", sw.workers, "Concurrent runs");
  sweep_cmd->add_option("--out", sw.out, "Output directory (overrides the config)");
  sweep_cmd->add_option("--set", sw.sets, "Extra key=value settings");

  struct {
    fs::path ckpt;
    int episodes = 10;
    std::uint64_t seed = 0;
    std::string gate_mode = "sampled";
  } ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--episodes", ev.episodes, "Evaluation episodes");
  eval_cmd->add_option("--seed", ev.seed, "Evaluation seed");
  eval_cmd->add_option("--gate-mode", ev.gate_mode, "sampled | deterministic");

  struct {
    fs::path ckpt;
    std::optional<int> rank, rank_min, rank_max;
    fs::path out;
    int episodes = 10;
    std::uint64_t seed = 0;
  } dc;
  auto* dec_cmd = app.add_subcommand("decompose", "Factor a checkpoint at one or more ranks and evaluate");
  dec_cmd->add_option("--ckpt", dc.ckpt, "Checkpoint file")->required();
  auto* rank_opt = dec_cmd->add_option("--rank", dc.rank, "Single rank");
  auto* min_opt = dec_cmd->add_option("--rank-min", dc.rank_min, "First rank of a range");
  auto* max_opt = dec_cmd->add_option("--rank-max", dc.rank_max, "Last rank of a range");
  min_opt->needs(max_opt)->excludes(rank_opt);
  max_opt->needs(min_opt)->excludes(rank_opt);
  dec_cmd->add_option("--out", dc.out, "Output directory")->required();
  dec_cmd->add_option("--episodes", dc.episodes, "Evaluation episodes per rank");
  dec_cmd->add_option("--seed", dc.seed, "Evaluation seed");

  fs::path report_dir;
  auto* report_cmd = app.add_subcommand("report", "Summarize a run directory");
  report_cmd->add_option("dir", report_dir, "Directory to scan")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (train_cmd->parsed()) {
      ExperimentConfig cfg = tr.config ? load_config(*tr.config) : ExperimentConfig{};
      if (!tr.env.empty()) apply_setting(cfg, "env", tr.env);
      if (!tr.algo.empty()) apply_setting(cfg, "algo", tr.algo);
      if (!tr.sparsity.empty()) apply_setting(cfg, "sparsity", tr.sparsity);
      if (tr.coeff) cfg.algo.lambda_c = *tr.coeff;
      if (tr.episodes) cfg.algo.episodes = *tr.episodes;
      if (tr.seed) cfg.algo.seed = *tr.seed;
      apply_overrides(cfg, tr.sets);
      cfg.algo.validate();
      std::optional<DemoBuffer> demos;
      if (tr.demos) demos = load_demos(*tr.demos);
      const RunResult r = run_experiment(cfg.algo, tr.out, demos ? &*demos : nullptr);
      std::printf("episodes %d  sparsity %.2f%%  converged %s\n", r.record.episodes_trained,
                  r.record.final_sparsity_pct,
                  r.record.convergence_episode ? std::to_string(*r.record.convergence_episode).c_str() : "no");
      if (const auto* last = r.record.last_eval()) {
        std::printf("last eval mean %.4f std %.4f\n", last->mean, last->std);
      }
      std::printf("wrote %s\n", tr.out.string().c_str());
    } else if (sweep_cmd->parsed()) {
      ExperimentConfig cfg = load_config(sw.config);
      if (sw.workers) cfg.workers = *sw.workers;
      if (sw.out) cfg.out_dir = *sw.out;
      apply_overrides(cfg, sw.sets);
      const SweepResult res = sweep(cfg);
      std::printf("%12s %12s %10s %11s %12s\n", "coefficient", "reward", "sparsity%", "conv_steps", "score");
      for (std::size_t i = 0; i < res.rows.size(); ++i) {
        const auto& r = res.rows[i];
        std::printf("%12g %12.2f %10.2f %11s %12.2f%s\n", r.coefficient, r.reward, r.sparsity_pct,
                    r.conv_steps ? std::to_string(static_cast<int>(*r.conv_steps)).c_str() : "-", r.score,
                    i == res.best ? "  *" : "");
      }
      std::printf("best checkpoint %s\n", (cfg.out_dir / kBestCheckpoint).string().c_str());
    } else if (eval_cmd->parsed()) {
      GateMode mode = GateMode::sampled;
      try {
        mode = gate_mode_from_string(ev.gate_mode);
      } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
      }
      if (ev.episodes < 1) throw ConfigError("--episodes must be at least 1");
      const Checkpoint ckpt = load_checkpoint(ev.ckpt);
      const EvalResult r = evaluate(ckpt, ev.episodes, ev.seed, mode);
      print_eval(ckpt.env + " " + to_string(ckpt.algo) + " (" + ckpt.kind() + ")", r, env_spec(ckpt.env).goal_dim > 0);
    } else if (dec_cmd->parsed()) {
      std::vector<int> ranks;
      if (dc.rank) {
        ranks.push_back(*dc.rank);
      } else if (dc.rank_min && dc.rank_max) {
        if (*dc.rank_min > *dc.rank_max) throw ConfigError("--rank-min exceeds --rank-max");
        for (int r = *dc.rank_min; r <= *dc.rank_max; ++r) ranks.push_back(r);
      } else {
        throw ConfigError("decompose needs --rank or --rank-min/--rank-max");
      }
      for (int r : ranks)
        if (r < 1 || r > 29) throw ConfigError("rank " + std::to_string(r) + " outside [1, 29]");
      if (dc.episodes < 1) throw ConfigError("--episodes must be at least 1");
      const Checkpoint ckpt = load_checkpoint(dc.ckpt);
      fs::create_directories(dc.out);
      const auto rows = rank_sweep(ckpt, ranks, dc.episodes, dc.seed);
      write_rank_sweep_csv(dc.out / kRankSweepCsv, rows);
      for (int r : ranks) {
        Checkpoint f = ckpt;
        f.network = decompose_network(ckpt.network, r);
        save_checkpoint(dc.out / ("rank" + std::to_string(r) + ".splc"), f);
      }
      std::printf("%5s %12s %15s %10s %12s %10s\n", "rank", "params_dense", "params_factored", "decrease%",
                  "eval_mean", "eval_std");
      for (const auto& r : rows) {
        std::printf("%5d %12zu %15zu %10.2f %12.2f %10.2f\n", r.rank, r.params_dense, r.params_factored,
                    r.size_decrease_pct, r.eval_mean, r.eval_std);
      }
    } else if (report_cmd->parsed()) {
      const Report rep = build_report(report_dir);
      std::fputs(rep.text().c_str(), stdout);
      if (fs::is_directory(report_dir)) {
        const std::string js = rep.json_text();
        write_file(report_dir / kReportJson,
                   std::span(reinterpret_cast<const std::uint8_t*>(js.data()), js.size()));
      }
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
