#include "splab/harness/run.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "splab/algos/ddpg.hpp"
#include "splab/algos/dqn.hpp"
#include "splab/algos/ppo.hpp"
#include "splab/errors.hpp"
#include "splab/lowrank.hpp"

namespace splab {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Shortest text that parses back to the same double.
std::string fmt(double x) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

class CsvWriter {
 public:
  CsvWriter() = default;
  CsvWriter(const fs::path& path, const std::string& header) : path_(path), out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path.string());
    line(header);
  }

  bool open() const { return out_.is_open(); }

  void line(const std::string& text) {
    if (!out_.is_open()) return;
    out_ << text << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed for " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

std::string join(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out += ',';
    out += c;
    first = false;
  }
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

json config_json(const AlgoConfig& cfg) {
  json j = json::object();
  std::istringstream in(describe(cfg));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

EvalResult final_evaluation(const AlgoConfig& cfg, const RunRecord& record) {
  EvalResult r;
  if (const auto* last = record.last_eval()) {
    r.mean = last->mean;
    r.std = last->std;
    r.success_rate = last->success_rate;
    return r;
  }
  return evaluate_policy(record.policy, head_for(cfg.algo), cfg.env, cfg.eval_episodes, cfg.seed,
                         cfg.eval_gate_mode);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("not a number: '" + s + "'");
  return x;
}

// Rows of a headed CSV as column-name maps. Throws FormatError on a header
// mismatch.
std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  if (split_csv_line(line) != header) throw FormatError(path.string() + ": unexpected header '" + line + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw FormatError(path.string() + ": wrong column count in '" + line + "'");
    rows.push_back(std::move(cells));
  }
  return rows;
}

const std::vector<std::string> kSweepHeader{"coefficient", "reward", "sparsity_pct", "conv_steps", "score"};
const std::vector<std::string> kRankHeader{"rank",        "params_dense",     "params_factored", "size_decrease_pct",
                                           "eval_reward_mean", "eval_reward_std"};

}  // namespace

RunRecord train(const AlgoConfig& cfg, const RunObserver& observer, const DemoBuffer* demos) {
  switch (cfg.algo) {
    case Algo::dqn:
    case Algo::ddqn:
      return train_dqn(cfg, observer);
    case Algo::ppo:
      return train_ppo(cfg, observer);
    case Algo::ddpg_her_dex:
      return train_ddpg_her_dex(cfg, observer, demos);
  }
  throw ConfigError("unknown algorithm");
}

Checkpoint make_checkpoint(const AlgoConfig& cfg, const RunRecord& record) {
  Checkpoint c;
  c.env = cfg.env;
  c.algo = cfg.algo;
  c.sparsity = cfg.sparsity;
  c.lambda_c = cfg.lambda_c;
  c.seed = cfg.seed;
  c.episodes = record.episodes_trained;
  c.network = record.policy;
  return c;
}

RunResult run_experiment(const AlgoConfig& cfg, const fs::path& out_dir, const DemoBuffer* demos) {
  cfg.validate();
  const bool write = !out_dir.empty();
  CsvWriter train_csv, eval_csv;
  if (write) {
    ensure_dir(out_dir);
    train_csv = CsvWriter(out_dir / kTrainCsv, "episode,return,epsilon,loss,l_sp,sparsity_pct");
    eval_csv = CsvWriter(out_dir / kEvalCsv, "episode,mean,std,sparsity_pct");
  }
  RunObserver observer;
  observer.on_train = [&](const TrainRow& r) {
    train_csv.line(join({std::to_string(r.episode), fmt(r.ret), fmt(r.epsilon), fmt(r.loss), fmt(r.l_sp),
                         fmt(r.sparsity_pct)}));
  };
  observer.on_eval = [&](const EvalRow& r) {
    eval_csv.line(join({std::to_string(r.episode), fmt(r.mean), fmt(r.std), fmt(r.sparsity_pct)}));
  };

  RunResult result;
  result.record = train(cfg, observer, demos);
  result.checkpoint = make_checkpoint(cfg, result.record);
  result.dir = out_dir;
  if (!write) return result;

  save_checkpoint(out_dir / kCheckpointFile, result.checkpoint);
  if (result.record.demos) save_demos(out_dir / kDemosFile, *result.record.demos);

  const EvalResult fin = final_evaluation(cfg, result.record);
  json j;
  j["env"] = cfg.env;
  j["algo"] = to_string(cfg.algo);
  j["sparsity"] = to_string(cfg.sparsity);
  j["lambda_c"] = cfg.lambda_c;
  j["seed"] = cfg.seed;
  j["episodes_requested"] = cfg.episodes;
  j["episodes_trained"] = result.record.episodes_trained;
  j["convergence_episode"] =
      result.record.convergence_episode ? json(*result.record.convergence_episode) : json(nullptr);
  j["target_reward"] = cfg.resolved_target();
  j["final_eval"] = {{"mean", fin.mean}, {"std", fin.std}, {"success_rate", fin.success_rate}};
  j["final_sparsity_pct"] = result.record.final_sparsity_pct;
  j["kind"] = result.checkpoint.kind();
  j["checkpoint"] = kCheckpointFile;
  j["config"] = config_json(cfg);
  write_text(out_dir / kRunJson, j.dump(2) + "\n");
  return result;
}

PolicyHead head_for(const Checkpoint& ckpt) { return head_for(ckpt.algo); }

EvalResult evaluate(const Checkpoint& ckpt, int episodes, std::uint64_t seed, GateMode mode) {
  return evaluate_policy(ckpt.network, head_for(ckpt), ckpt.env, episodes, seed, mode);
}

double sweep_score(double reward, double sparsity_pct, ScoreMode mode, const AlgoConfig& cfg) {
  if (mode == ScoreMode::raw) return reward + sparsity_pct;
  const auto spec = env_spec(cfg.env);
  const double target = cfg.resolved_target();
  // Worst attainable return: 0 for survival rewards, -horizon for step costs.
  const double worst = target > 0.0 ? 0.0 : -static_cast<double>(spec.max_steps);
  const double span = target - worst;
  const double scaled = span > 0.0 ? std::clamp((reward - worst) / span, 0.0, 1.0) * 100.0 : 0.0;
  return scaled + sparsity_pct;
}

std::size_t best_row(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw InvalidArgument("no sweep rows");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& a = rows[i];
    const auto& b = rows[best];
    if (a.score > b.score || (a.score == b.score && a.sparsity_pct > b.sparsity_pct)) best = i;
  }
  return best;
}

SweepResult sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  struct Task {
    std::size_t coef;
    std::size_t seed;
  };
  struct Outcome {
    double reward = 0.0;
    double sparsity = 0.0;
    std::optional<int> conv;
    Checkpoint ckpt;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cfg.coefficients.size(); ++c)
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) tasks.push_back({c, s});
  std::vector<Outcome> outcomes(tasks.size());

  ensure_dir(cfg.out_dir);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      {
        std::lock_guard lock(failure_mutex);
        if (failure) return;
      }
      try {
        AlgoConfig run = cfg.algo;
        run.lambda_c = cfg.coefficients[tasks[i].coef];
        run.seed = cfg.seeds[tasks[i].seed];
        const fs::path dir = cfg.out_dir / ("c" + fmt(run.lambda_c)) / ("seed" + std::to_string(run.seed));
        RunResult r = run_experiment(run, dir);
        const EvalResult fin = final_evaluation(run, r.record);
        outcomes[i] = {fin.mean, r.record.final_sparsity_pct, r.record.convergence_episode, std::move(r.checkpoint)};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_workers = std::min<int>(cfg.workers, static_cast<int>(tasks.size()));
  std::vector<std::thread> threads;
  for (int w = 1; w < n_workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  SweepResult result;
  for (std::size_t c = 0; c < cfg.coefficients.size(); ++c) {
    SweepRow row;
    row.coefficient = cfg.coefficients[c];
    double conv_sum = 0.0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].coef != c) continue;
      row.seed_rewards.push_back(outcomes[i].reward);
      row.seed_sparsity.push_back(outcomes[i].sparsity);
      if (outcomes[i].conv) {
        conv_sum += *outcomes[i].conv;
        ++row.converged_seeds;
      }
    }
    const double n = static_cast<double>(row.seed_rewards.size());
    for (double r : row.seed_rewards) row.reward += r / n;
    for (double s : row.seed_sparsity) row.sparsity_pct += s / n;
    if (row.converged_seeds > 0) row.conv_steps = conv_sum / row.converged_seeds;
    row.score = sweep_score(row.reward, row.sparsity_pct, cfg.score_mode, cfg.algo);
    result.rows.push_back(std::move(row));
  }
  result.best = best_row(result.rows);

  // Best seed within the winning coefficient, by the same objective.
  std::optional<std::size_t> pick;
  double pick_score = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].coef != result.best) continue;
    const double s = sweep_score(outcomes[i].reward, outcomes[i].sparsity, cfg.score_mode, cfg.algo);
    if (!pick || s > pick_score) {
      pick = i;
      pick_score = s;
    }
  }
  result.best_checkpoint = outcomes[*pick].ckpt;

  std::string csv = "coefficient,reward,sparsity_pct,conv_steps,score\n";
  for (const auto& r : result.rows) {
    csv += join({fmt(r.coefficient), fmt(r.reward), fmt(r.sparsity_pct), r.conv_steps ? fmt(*r.conv_steps) : "",
                 fmt(r.score)}) +
           "\n";
  }
  write_text(cfg.out_dir / kSweepCsv, csv);
  save_checkpoint(cfg.out_dir / kBestCheckpoint, result.best_checkpoint);
  return result;
}

std::vector<RankRow> rank_sweep(const Checkpoint& ckpt, const std::vector<int>& ranks, int eval_episodes,
                                std::uint64_t seed) {
  if (eval_episodes < 1) throw InvalidArgument("evaluation needs at least one episode");
  const Network dense = fold_network(ckpt.network);
  const std::size_t dense_count = dense.storage_count();
  std::vector<RankRow> rows;
  for (int r : ranks) {
    if (r < 1 || r > 29) throw InvalidArgument("rank " + std::to_string(r) + " outside [1, 29]");
    const Network f = decompose_network(ckpt.network, r);
    RankRow row;
    row.rank = r;
    row.params_dense = dense_count;
    row.params_factored = f.storage_count();
    row.size_decrease_pct =
        100.0 * (1.0 - static_cast<double>(row.params_factored) / static_cast<double>(row.params_dense));
    const EvalResult e = evaluate_policy(f, head_for(ckpt), ckpt.env, eval_episodes, seed, GateMode::deterministic);
    row.eval_mean = e.mean;
    row.eval_std = e.std;
    rows.push_back(row);
  }
  return rows;
}

std::optional<int> minimal_performant_rank(const std::vector<RankRow>& rows, double threshold) {
  std::optional<int> best;
  for (const auto& r : rows)
    if (r.eval_mean >= threshold && (!best || r.rank < *best)) best = r.rank;
  return best;
}

void write_rank_sweep_csv(const fs::path& path, const std::vector<RankRow>& rows) {
  std::string csv = "rank,params_dense,params_factored,size_decrease_pct,eval_reward_mean,eval_reward_std\n";
  for (const auto& r : rows) {
    csv += join({std::to_string(r.rank), std::to_string(r.params_dense), std::to_string(r.params_factored),
                 fmt(r.size_decrease_pct), fmt(r.eval_mean), fmt(r.eval_std)}) +
           "\n";
  }
  write_text(path, csv);
}

Report build_report(const fs::path& dir) {
  Report rep;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    rep.warnings.push_back("not a directory: " + dir.string());
    return rep;
  }
  std::vector<fs::path> run_files, sweep_files, rank_files;
  for (auto it = fs::recursive_directory_iterator(dir, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    const auto name = it->path().filename().string();
    if (name == kRunJson) run_files.push_back(it->path());
    if (name == kSweepCsv) sweep_files.push_back(it->path());
    if (name == kRankSweepCsv) rank_files.push_back(it->path());
  }
  if (ec) rep.warnings.push_back("directory walk stopped early: " + ec.message());
  std::sort(run_files.begin(), run_files.end());
  std::sort(sweep_files.begin(), sweep_files.end());
  std::sort(rank_files.begin(), rank_files.end());

  for (const auto& f : run_files) {
    const std::string rel = fs::relative(f.parent_path(), dir).generic_string();
    try {
      std::ifstream in(f);
      const json j = json::parse(in);
      ReportRow row;
      row.run = rel;
      row.env = j.at("env").get<std::string>();
      row.algo = j.at("algo").get<std::string>();
      const std::string sp = j.at("sparsity").get<std::string>();
      row.policy = sp == "none" ? "dense" : "sparse";
      if (sp != "none") row.coefficient = j.at("lambda_c").get<double>();
      row.sparsity_pct = j.at("final_sparsity_pct").get<double>();
      row.eval_reward = j.at("final_eval").at("mean").get<double>();
      if (!j.at("convergence_episode").is_null()) row.conv_steps = j.at("convergence_episode").get<int>();
      row.train_steps = j.at("episodes_trained").get<int>();
      for (const char* csv : {kTrainCsv, kEvalCsv}) {
        if (!fs::exists(f.parent_path() / csv)) rep.warnings.push_back(rel + ": missing " + csv);
      }
      rep.runs.push_back(std::move(row));
    } catch (const std::exception& e) {
      rep.warnings.push_back(rel + "/run.json unreadable: " + e.what());
    }
  }
  if (run_files.empty()) rep.warnings.push_back("no runs found under " + dir.string());

  if (!sweep_files.empty()) {
    if (sweep_files.size() > 1) rep.warnings.push_back("several sweep.csv files; using " + sweep_files.front().string());
    try {
      for (const auto& cells : read_csv(sweep_files.front(), kSweepHeader)) {
        SweepRow r;
        r.coefficient = parse_double(cells[0]);
        r.reward = parse_double(cells[1]);
        r.sparsity_pct = parse_double(cells[2]);
        if (!cells[3].empty()) r.conv_steps = parse_double(cells[3]);
        r.score = parse_double(cells[4]);
        rep.sweep.push_back(r);
      }
    } catch (const std::exception& e) {
      rep.warnings.push_back(std::string("sweep.csv unreadable: ") + e.what());
    }
  }
  if (!rank_files.empty()) {
    if (rank_files.size() > 1) rep.warnings.push_back("several rank_sweep.csv files; using " + rank_files.front().string());
    try {
      for (const auto& cells : read_csv(rank_files.front(), kRankHeader)) {
        RankRow r;
        r.rank = static_cast<int>(parse_double(cells[0]));
        r.params_dense = static_cast<std::size_t>(parse_double(cells[1]));
        r.params_factored = static_cast<std::size_t>(parse_double(cells[2]));
        r.size_decrease_pct = parse_double(cells[3]);
        r.eval_mean = parse_double(cells[4]);
        r.eval_std = parse_double(cells[5]);
        rep.ranks.push_back(r);
      }
    } catch (const std::exception& e) {
      rep.warnings.push_back(std::string("rank_sweep.csv unreadable: ") + e.what());
    }
  }
  return rep;
}

std::string Report::text() const {
  std::string out;
  char buf[256];
  if (!runs.empty()) {
    std::snprintf(buf, sizeof buf, "%-28s %-7s %-13s %-11s %10s %11s %12s %11s %12s\n", "run", "policy", "algo", "env",
                  "sparsity%", "coefficient", "eval_reward", "conv_steps", "train_steps");
    out += buf;
    for (const auto& r : runs) {
      std::snprintf(buf, sizeof buf, "%-28s %-7s %-13s %-11s %10.2f %11s %12.2f %11s %12d\n", r.run.c_str(),
                    r.policy.c_str(), r.algo.c_str(), r.env.c_str(), r.sparsity_pct,
                    r.coefficient ? fmt(*r.coefficient).c_str() : "-", r.eval_reward,
                    r.conv_steps ? std::to_string(*r.conv_steps).c_str() : "-", r.train_steps);
      out += buf;
    }
  }
  if (!sweep.empty()) {
    out += "\nsweep\n";
    std::snprintf(buf, sizeof buf, "%12s %12s %10s %11s %12s\n", "coefficient", "reward", "sparsity%", "conv_steps",
                  "score");
    out += buf;
    for (const auto& r : sweep) {
      std::snprintf(buf, sizeof buf, "%12s %12.2f %10.2f %11s %12.2f\n", fmt(r.coefficient).c_str(), r.reward,
                    r.sparsity_pct, r.conv_steps ? fmt(*r.conv_steps).c_str() : "-", r.score);
      out += buf;
    }
  }
  if (!ranks.empty()) {
    out += "\nrank sweep\n";
    std::snprintf(buf, sizeof buf, "%5s %12s %15s %10s %12s %10s\n", "rank", "params_dense", "params_factored",
                  "decrease%", "eval_mean", "eval_std");
    out += buf;
    for (const auto& r : ranks) {
      std::snprintf(buf, sizeof buf, "%5d %12zu %15zu %10.2f %12.2f %10.2f\n", r.rank, r.params_dense,
                    r.params_factored, r.size_decrease_pct, r.eval_mean, r.eval_std);
      out += buf;
    }
  }
  for (const auto& w : warnings) out += "warning: " + w + "\n";
  return out;
}

std::string Report::json_text() const {
  json j;
  j["runs"] = json::array();
  for (const auto& r : runs) {
    j["runs"].push_back({{"run", r.run},
                         {"policy", r.policy},
                         {"algo", r.algo},
                         {"env", r.env},
                         {"sparsity_pct", r.sparsity_pct},
                         {"coefficient", r.coefficient ? json(*r.coefficient) : json(nullptr)},
                         {"eval_reward", r.eval_reward},
                         {"conv_steps", r.conv_steps ? json(*r.conv_steps) : json(nullptr)},
                         {"train_steps", r.train_steps}});
  }
  j["sweep"] = json::array();
  for (const auto& r : sweep) {
    j["sweep"].push_back({{"coefficient", r.coefficient},
                          {"reward", r.reward},
                          {"sparsity_pct", r.sparsity_pct},
                          {"conv_steps", r.conv_steps ? json(*r.conv_steps) : json(nullptr)},
                          {"score", r.score}});
  }
  j["rank_sweep"] = json::array();
  for (const auto& r : ranks) {
    j["rank_sweep"].push_back({{"rank", r.rank},
                               {"params_dense", r.params_dense},
                               {"params_factored", r.params_factored},
                               {"size_decrease_pct", r.size_decrease_pct},
                               {"eval_reward_mean", r.eval_mean},
                               {"eval_reward_std", r.eval_std}});
  }
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

}  // namespace splab
