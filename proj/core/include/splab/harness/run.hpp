#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splab/algos/common.hpp"
#include "splab/harness/checkpoint.hpp"
#include "splab/harness/config.hpp"

namespace splab {

// File names inside a run directory.
inline constexpr const char* kTrainCsv = "train.csv";
inline constexpr const char* kEvalCsv = "eval.csv";
inline constexpr const char* kCheckpointFile = "policy.splc";
inline constexpr const char* kDemosFile = "demos.splc";
inline constexpr const char* kRunJson = "run.json";
inline constexpr const char* kSweepCsv = "sweep.csv";
inline constexpr const char* kBestCheckpoint = "best.splc";
inline constexpr const char* kRankSweepCsv = "rank_sweep.csv";
inline constexpr const char* kReportJson = "report.json";

// Dispatches to the trainer for cfg.algo.
RunRecord train(const AlgoConfig& cfg, const RunObserver& observer = {}, const DemoBuffer* demos = nullptr);

Checkpoint make_checkpoint(const AlgoConfig& cfg, const RunRecord& record);

struct RunResult {
  RunRecord record;
  Checkpoint checkpoint;
  std::filesystem::path dir;
};

// Trains one configuration, streaming train.csv / eval.csv into `out_dir`,
// then writes the checkpoint (plus demos for ddpg_her_dex) and run.json.
// `out_dir` is created if missing. An empty path trains without writing.
RunResult run_experiment(const AlgoConfig& cfg, const std::filesystem::path& out_dir,
                         const DemoBuffer* demos = nullptr);

PolicyHead head_for(const Checkpoint& ckpt);

// Greedy evaluation of a stored policy.
EvalResult evaluate(const Checkpoint& ckpt, int episodes, std::uint64_t seed, GateMode mode = GateMode::sampled);

struct SweepRow {
  double coefficient = 0.0;
  double reward = 0.0;        // mean over seeds of the last evaluation
  double sparsity_pct = 0.0;  // mean over seeds
  std::optional<double> conv_steps;  // mean convergence episode over converged seeds
  double score = 0.0;
  int converged_seeds = 0;
  std::vector<double> seed_rewards;
  std::vector<double> seed_sparsity;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // coefficient order as configured
  std::size_t best = 0;        // index into rows
  Checkpoint best_checkpoint;
};

// r + S_p (raw) or 100 * (r - worst) / (target - worst) + S_p (normalized).
double sweep_score(double reward, double sparsity_pct, ScoreMode mode, const AlgoConfig& cfg);

// Index of the best row: highest score, ties to higher sparsity, then to the
// earlier row.
std::size_t best_row(const std::vector<SweepRow>& rows);

// One run per (coefficient, seed) under out_dir/c<coefficient>/seed<seed>,
// run on up to `workers` threads. Writes sweep.csv and best.splc into out_dir.
SweepResult sweep(const ExperimentConfig& cfg);

struct RankRow {
  int rank = 0;
  std::size_t params_dense = 0;
  std::size_t params_factored = 0;
  double size_decrease_pct = 0.0;
  double eval_mean = 0.0;
  double eval_std = 0.0;
};

// Decomposes the stored policy at every rank and evaluates each with the
// same episode seeds. Ranks must lie in [1, 29].
std::vector<RankRow> rank_sweep(const Checkpoint& ckpt, const std::vector<int>& ranks, int eval_episodes,
                                std::uint64_t seed);

// Smallest rank whose mean evaluation reaches `threshold`.
std::optional<int> minimal_performant_rank(const std::vector<RankRow>& rows, double threshold);

void write_rank_sweep_csv(const std::filesystem::path& path, const std::vector<RankRow>& rows);

struct ReportRow {
  std::string run;  // directory relative to the report root
  std::string policy;  // "dense" or "sparse"
  std::string algo;
  std::string env;
  double sparsity_pct = 0.0;
  std::optional<double> coefficient;
  double eval_reward = 0.0;
  std::optional<int> conv_steps;
  int train_steps = 0;
};

struct Report {
  std::vector<ReportRow> runs;
  std::vector<SweepRow> sweep;  // from the first sweep.csv found
  std::vector<RankRow> ranks;   // from the first rank_sweep.csv found
  std::vector<std::string> warnings;

  std::string text() const;
  std::string json_text() const;
};

// Collects run.json / sweep.csv / rank_sweep.csv below `dir`. Missing or
// malformed files become warnings.
Report build_report(const std::filesystem::path& dir);

}  // namespace splab
