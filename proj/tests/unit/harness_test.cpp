#include <gtest/gtest.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "properties.hpp"
#include "splab/errors.hpp"
#include "splab/harness/checkpoint.hpp"
#include "splab/harness/config.hpp"
#include "splab/harness/run.hpp"
#include "splab/lowrank.hpp"

using namespace splab;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("splab_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             std::to_string(counter++) + "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

double num(const std::string& s) {
  double x = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), x);
  return x;
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::string c;
  std::istringstream in(line);
  while (std::getline(in, c, ',')) out.push_back(c);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

AlgoConfig quick_dqn(int episodes = 20) {
  AlgoConfig cfg;
  cfg.episodes = episodes;
  cfg.dqn.learning_starts = 64;
  return cfg;
}

}  // namespace

TEST(ConfigFile, ParsesKeysAndComments) {
  const auto cfg = parse_config(
      "# sweep\n"
      "env = acrobot\n"
      "algo = ddqn   # prioritized\n"
      "sparsity = l0\n"
      "coefficients = 1e-3, 5e-2\n"
      "seeds = 0,1,2\n"
      "hidden = 32,32\n"
      "dqn.target_update = 50\n"
      "workers = 3\n"
      "score_mode = normalized\n");
  EXPECT_EQ(cfg.algo.env, "acrobot");
  EXPECT_EQ(cfg.algo.algo, Algo::ddqn);
  EXPECT_EQ(cfg.algo.sparsity, Regularizer::l0);
  EXPECT_EQ(cfg.coefficients, (std::vector<double>{1e-3, 5e-2}));
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(cfg.algo.hidden, (std::vector<int>{32, 32}));
  EXPECT_EQ(cfg.algo.dqn.target_update, 50);
  EXPECT_EQ(cfg.workers, 3);
  EXPECT_EQ(cfg.score_mode, ScoreMode::normalized);
}

TEST(ConfigFile, DefaultGrid) {
  const ExperimentConfig cfg;
  EXPECT_EQ(cfg.coefficients, (std::vector<double>{1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1}));
}

TEST(ConfigFile, ErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("env = cartpole\nbogus = 1\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("episodes = ten\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("seed = 1\nseed = 2\n").find("duplicate"), std::string::npos);
  EXPECT_NE(message("env cartpole\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("eval_gate_mode = fuzzy\n").find("line 1"), std::string::npos);
}

TEST(ConfigFile, DescribeRoundTrips) {
  AlgoConfig a;
  a.env = "acrobot";
  a.algo = Algo::ppo;
  a.lambda_c = 0.1 + 0.2;
  a.ppo.clip = 0.15;
  a.target_reward = -90.0;
  const ExperimentConfig back = parse_config(describe(a));
  EXPECT_EQ(describe(back.algo), describe(a));
  EXPECT_EQ(back.algo.lambda_c, a.lambda_c);
}

TEST(ConfigFile, RejectsInvalidExperiment) {
  EXPECT_THROW(parse_config("coefficients = 1e-3, -1\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("workers = 0\n").validate(), ConfigError);
}

TEST(Checkpoint, RoundTripsEveryKind) {
  const auto r = props::checkpoint_roundtrip(3);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Checkpoint, FileRoundTripAndKind) {
  TempDir dir;
  Checkpoint c;
  c.env = "acrobot";
  c.algo = Algo::dqn;
  c.sparsity = Regularizer::l0;
  c.lambda_c = 5e-2;
  c.network = mlp_new(std::vector<int>{6, 64, 160, 3}, Activation::relu, 1);
  c.network.enable_gates(2.4);
  save_checkpoint(dir.path() / "c.splc", c);
  const Checkpoint back = load_checkpoint(dir.path() / "c.splc");
  EXPECT_TRUE(back.identical_to(c));
  EXPECT_EQ(back.kind(), "gated");
  EXPECT_EQ(back.network.gate_config().beta, c.network.gate_config().beta);
  // Gated checkpoints evaluate in either gate mode.
  EXPECT_NO_THROW(evaluate(back, 1, 0, GateMode::sampled));
  EXPECT_NO_THROW(evaluate(back, 1, 0, GateMode::deterministic));
}

TEST(Checkpoint, TruncationNamesSection) {
  Checkpoint c;
  c.network = mlp_new(std::vector<int>{4, 8, 2}, Activation::relu, 0);
  const auto bytes = encode_checkpoint(c);
  for (std::size_t cut : {std::size_t{3}, std::size_t{8}, std::size_t{40}, bytes.size() - 1}) {
    try {
      decode_checkpoint(std::span(bytes.data(), cut));
      ADD_FAILURE() << "no error at " << cut;
    } catch (const UnsupportedFormat&) {
      ADD_FAILURE() << "wrong error type at " << cut;
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
    }
  }
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint(extra), FormatError);
}

TEST(Checkpoint, MagicAndVersionChecked) {
  Checkpoint c;
  c.network = mlp_new(std::vector<int>{2, 2}, Activation::relu, 0);
  auto bytes = encode_checkpoint(c);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), UnsupportedFormat);
  auto bad_version = bytes;
  bad_version[4] = 0x7f;
  EXPECT_THROW(decode_checkpoint(bad_version), UnsupportedFormat);
}

TEST(Checkpoint, DemosRoundTrip) {
  DemoBuffer d(5);
  Rng rng(1);
  for (int i = 0; i < 5; ++i) d.push(Vector::Random(6), Vector::Random(3));
  const DemoBuffer back = decode_demos(encode_demos(d));
  ASSERT_EQ(back.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(back.query(i), d.query(i));
    EXPECT_EQ(back.action(i), d.action(i));
  }
  Checkpoint c;
  c.network = mlp_new(std::vector<int>{2, 2}, Activation::relu, 0);
  EXPECT_THROW(decode_demos(encode_checkpoint(c)), FormatError);
}

TEST(Evaluate, DeterministicAndFactoredAgree) {
  Checkpoint c;
  c.env = "cartpole";
  c.network = mlp_new(std::vector<int>{4, 64, 160, 2}, Activation::relu, 3);
  const EvalResult a = evaluate(c, 5, 11, GateMode::sampled);
  const EvalResult b = evaluate(c, 5, 11, GateMode::sampled);
  EXPECT_EQ(a.returns, b.returns);
  EXPECT_EQ(evaluate(c, 1, 4).std, 0.0);

  Checkpoint f = c;
  f.network = decompose_network(c.network, 64);
  EXPECT_NEAR(evaluate(f, 5, 11).mean, a.mean, 1e-6);
}

TEST(Sweep, ScoreAndTieBreak) {
  AlgoConfig cfg;
  EXPECT_EQ(sweep_score(500.0, 28.0, ScoreMode::raw, cfg), 528.0);
  std::vector<SweepRow> rows(2);
  rows[0].reward = 500.0;
  rows[0].sparsity_pct = 28.0;
  rows[0].score = 528.0;
  rows[1].reward = 480.0;
  rows[1].sparsity_pct = 30.0;
  rows[1].score = 510.0;
  EXPECT_EQ(best_row(rows), 0u);
  rows[1].score = 528.0;
  EXPECT_EQ(best_row(rows), 1u);
  EXPECT_EQ(best_row(std::vector<SweepRow>(1)), 0u);
  EXPECT_THROW(best_row({}), InvalidArgument);
}

TEST(Sweep, NormalizedScore) {
  AlgoConfig cp;
  EXPECT_DOUBLE_EQ(sweep_score(250.0, 10.0, ScoreMode::normalized, cp), 60.0);
  AlgoConfig ac;
  ac.env = "acrobot";
  // Worst -500, target -100.
  EXPECT_DOUBLE_EQ(sweep_score(-300.0, 0.0, ScoreMode::normalized, ac), 50.0);
  EXPECT_DOUBLE_EQ(sweep_score(-50.0, 5.0, ScoreMode::normalized, ac), 105.0);
}

TEST(RunExperiment, ZeroEpisodesWritesEmptyArtifacts) {
  TempDir dir;
  const RunResult r = run_experiment(quick_dqn(0), dir.path() / "run");
  EXPECT_EQ(slurp(dir.path() / "run" / kTrainCsv), "episode,return,epsilon,loss,l_sp,sparsity_pct\n");
  EXPECT_EQ(slurp(dir.path() / "run" / kEvalCsv), "episode,mean,std,sparsity_pct\n");
  EXPECT_TRUE(load_checkpoint(dir.path() / "run" / kCheckpointFile).identical_to(r.checkpoint));
  EXPECT_TRUE(fs::exists(dir.path() / "run" / kRunJson));
}

TEST(RunExperiment, CsvStreamsMatchRecordAndReproduce) {
  TempDir dir;
  const AlgoConfig cfg = quick_dqn(25);
  const RunResult a = run_experiment(cfg, dir.path() / "a");
  run_experiment(cfg, dir.path() / "b");
  for (const char* f : {kTrainCsv, kEvalCsv, kRunJson, kCheckpointFile})
    EXPECT_EQ(slurp(dir.path() / "a" / f), slurp(dir.path() / "b" / f)) << f;
  const auto train = lines(slurp(dir.path() / "a" / kTrainCsv));
  ASSERT_EQ(train.size(), a.record.train.size() + 1);
  for (std::size_t i = 0; i < a.record.train.size(); ++i) {
    const auto c = cells(train[i + 1]);
    ASSERT_EQ(c.size(), 6u);
    EXPECT_EQ(num(c[1]), a.record.train[i].ret);
    EXPECT_EQ(num(c[3]), a.record.train[i].loss);
  }
  EXPECT_EQ(lines(slurp(dir.path() / "a" / kEvalCsv)).size(), a.record.eval.size() + 1);
}

TEST(RunExperiment, EarlyStopTruncatesCsv) {
  TempDir dir;
  AlgoConfig cfg = quick_dqn(80);
  cfg.env = "acrobot";
  cfg.target_reward = -450.0;
  const RunResult r = run_experiment(cfg, dir.path());
  ASSERT_TRUE(r.record.convergence_episode.has_value());
  const auto train = lines(slurp(dir.path() / kTrainCsv));
  EXPECT_EQ(static_cast<int>(num(cells(train.back())[0])), *r.record.convergence_episode);
}

TEST(SweepRun, SingleCoefficientIsBestAndScoresAreExactSums) {
  TempDir dir;
  ExperimentConfig cfg;
  cfg.algo = quick_dqn(20);
  cfg.algo.sparsity = Regularizer::l0;
  cfg.coefficients = {0.0, 5e-2};
  cfg.seeds = {0, 1};
  cfg.workers = 2;
  cfg.out_dir = dir.path();
  const SweepResult res = sweep(cfg);
  ASSERT_EQ(res.rows.size(), 2u);
  const auto rows = lines(slurp(dir.path() / kSweepCsv));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "coefficient,reward,sparsity_pct,conv_steps,score");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = cells(rows[i]);
    ASSERT_EQ(c.size(), 5u);
    EXPECT_EQ(num(c[4]), num(c[1]) + num(c[2]));
  }
  EXPECT_TRUE(fs::exists(dir.path() / "c0" / "seed1" / kTrainCsv));
  EXPECT_TRUE(load_checkpoint(dir.path() / kBestCheckpoint).identical_to(res.best_checkpoint));

  // Serial and parallel sweeps write the same bytes.
  TempDir serial;
  cfg.workers = 1;
  cfg.out_dir = serial.path();
  sweep(cfg);
  EXPECT_EQ(slurp(serial.path() / kSweepCsv), slurp(dir.path() / kSweepCsv));

  TempDir one;
  cfg.coefficients = {0.0};
  cfg.seeds = {0};
  cfg.out_dir = one.path();
  const SweepResult single = sweep(cfg);
  EXPECT_EQ(single.best, 0u);
  EXPECT_NEAR(single.rows[0].score, single.rows[0].reward + single.rows[0].sparsity_pct, 0.0);
}

TEST(RankSweep, AccountingAndValidation) {
  Checkpoint c;
  c.env = "cartpole";
  c.network = mlp_new(std::vector<int>{4, 64, 160, 2}, Activation::relu, 0);
  const auto rows = rank_sweep(c, {1, 5, 10, 29}, 2, 0);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].params_dense, 11042u);
    EXPECT_DOUBLE_EQ(rows[i].size_decrease_pct,
                     100.0 * (11042.0 - static_cast<double>(rows[i].params_factored)) / 11042.0);
    if (i > 0) {
      EXPECT_LT(rows[i].size_decrease_pct, rows[i - 1].size_decrease_pct);
    }
  }
  EXPECT_THROW(rank_sweep(c, {30}, 1, 0), InvalidArgument);
  EXPECT_THROW(rank_sweep(c, {0}, 1, 0), InvalidArgument);

  std::vector<RankRow> fake(3);
  fake[0] = {2, 0, 0, 0, 300.0, 0};
  fake[1] = {5, 0, 0, 0, 480.0, 0};
  fake[2] = {9, 0, 0, 0, 500.0, 0};
  EXPECT_EQ(minimal_performant_rank(fake, 475.0), 5);
  EXPECT_FALSE(minimal_performant_rank(fake, 501.0).has_value());
}

TEST(Report, EmptyDirectoryWarns) {
  TempDir dir;
  const Report r = build_report(dir.path());
  EXPECT_TRUE(r.runs.empty());
  EXPECT_GT(r.warnings.size(), 0u);
  EXPECT_GT(build_report(dir.path() / "missing").warnings.size(), 0u);
}

TEST(Report, SingleDenseRunIsOneRow) {
  TempDir dir;
  run_experiment(quick_dqn(10), dir.path() / "dense");
  const Report r = build_report(dir.path());
  ASSERT_EQ(r.runs.size(), 1u);
  EXPECT_EQ(r.runs[0].policy, "dense");
  EXPECT_EQ(r.runs[0].train_steps, 10);
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_NE(r.json_text().find("\"runs\""), std::string::npos);
}

TEST(Report, DenseSweepAndRankTables) {
  TempDir dir;
  const RunResult dense = run_experiment(quick_dqn(10), dir.path() / "dense");
  ExperimentConfig cfg;
  cfg.algo = quick_dqn(10);
  cfg.algo.sparsity = Regularizer::l0;
  cfg.coefficients = {5e-2};
  cfg.out_dir = dir.path() / "sweep";
  sweep(cfg);
  write_rank_sweep_csv(dir.path() / kRankSweepCsv, rank_sweep(dense.checkpoint, {3, 4}, 1, 0));
  fs::remove(dir.path() / "dense" / kEvalCsv);

  const Report r = build_report(dir.path());
  EXPECT_EQ(r.runs.size(), 2u);
  EXPECT_EQ(r.sweep.size(), 1u);
  EXPECT_EQ(r.ranks.size(), 2u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find(kEvalCsv), std::string::npos);
  const std::string text = r.text();
  EXPECT_NE(text.find("sweep"), std::string::npos);
  EXPECT_NE(text.find("rank sweep"), std::string::npos);
}

TEST(Properties, ParameterCounts) {
  const auto r = props::parameter_counts();
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Properties, GradientCheckHundredNets) {
  const auto r = props::gradient_check(100, 2024);
  EXPECT_TRUE(r.pass) << r.detail;
}
