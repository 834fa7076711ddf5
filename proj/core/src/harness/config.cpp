#include "splab/harness/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "splab/errors.hpp"

namespace splab {

std::string to_string(ScoreMode m) { return m == ScoreMode::raw ? "raw" : "normalized"; }

ScoreMode score_mode_from_string(const std::string& name) {
  if (name == "raw") return ScoreMode::raw;
  if (name == "normalized") return ScoreMode::normalized;
  throw ConfigError("unknown score mode '" + name + "'");
}

void ExperimentConfig::validate() const {
  algo.validate();
  if (coefficients.empty()) throw ConfigError("at least one coefficient is required");
  for (double c : coefficients)
    if (!(c >= 0.0)) throw ConfigError("coefficients must be non-negative");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < -2147483647LL || x > 2147483647LL) throw ConfigError(key + ": value out of range");
  return static_cast<int>(x);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < 0) throw ConfigError(key + ": must be non-negative");
  return static_cast<std::size_t>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string num(double x) {
  char buf[40];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += f(xs[i]);
  }
  return out;
}

std::string num_list(const std::vector<int>& xs) {
  return join(xs, [](int x) { return std::to_string(x); });
}

std::vector<int> int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(to_int(key, s));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const AlgoConfig&)>;

struct Entry {
  Setter set;
  Getter get;  // empty for sweep-level keys
};

const std::map<std::string, Entry>& table() {
  static const std::map<std::string, Entry> t = [] {
    std::map<std::string, Entry> m;
    auto real = [&](const std::string& key, auto member) {
      m[key] = {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  member(c.algo) = to_double(k, v);
                },
                [member](AlgoConfig a) { return num(member(a)); }};
    };
    auto integer = [&](const std::string& key, auto member) {
      m[key] = {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  member(c.algo) = to_int(k, v);
                },
                [member](AlgoConfig a) { return std::to_string(member(a)); }};
    };
    auto size = [&](const std::string& key, auto member) {
      m[key] = {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  member(c.algo) = to_size(k, v);
                },
                [member](AlgoConfig a) { return std::to_string(member(a)); }};
    };

    m["env"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) {
                  env_spec(v);
                  c.algo.env = v;
                },
                [](const AlgoConfig& a) { return a.env; }};
    m["algo"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.algo.algo = algo_from_string(v); },
                 [](const AlgoConfig& a) { return to_string(a.algo); }};
    m["sparsity"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) {
                       c.algo.sparsity = regularizer_from_string(v);
                     },
                     [](const AlgoConfig& a) { return to_string(a.sparsity); }};
    m["seed"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                   c.algo.seed = to_u64(k, v);
                   c.seeds = {c.algo.seed};
                 },
                 [](const AlgoConfig& a) { return std::to_string(a.seed); }};
    real("coeff", [](AlgoConfig& a) -> double& { return a.lambda_c; });
    integer("episodes", [](AlgoConfig& a) -> int& { return a.episodes; });
    real("gamma", [](AlgoConfig& a) -> double& { return a.gamma; });
    integer("batch", [](AlgoConfig& a) -> int& { return a.batch; });
    real("learning_rate", [](AlgoConfig& a) -> double& { return a.learning_rate; });
    real("gate_learning_rate", [](AlgoConfig& a) -> double& { return a.gate_learning_rate; });
    real("log_alpha_init", [](AlgoConfig& a) -> double& { return a.log_alpha_init; });
    real("gate_beta", [](AlgoConfig& a) -> double& { return a.gate.beta; });
    real("gate_gamma", [](AlgoConfig& a) -> double& { return a.gate.gamma; });
    real("gate_zeta", [](AlgoConfig& a) -> double& { return a.gate.zeta; });
    integer("eval_every", [](AlgoConfig& a) -> int& { return a.eval_every; });
    integer("eval_episodes", [](AlgoConfig& a) -> int& { return a.eval_episodes; });
    m["hidden"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.algo.hidden = int_list(k, v); },
                   [](const AlgoConfig& a) { return num_list(a.hidden); }};
    m["target_reward"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                            if (v == "default") {
                              c.algo.target_reward.reset();
                            } else {
                              c.algo.target_reward = to_double(k, v);
                            }
                          },
                          [](const AlgoConfig& a) { return a.target_reward ? num(*a.target_reward) : "default"; }};
    m["early_stop"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                         if (v == "default") {
                           c.algo.early_stop.reset();
                         } else {
                           c.algo.early_stop = to_bool(k, v);
                         }
                       },
                       [](const AlgoConfig& a) {
                         return a.early_stop ? std::string(*a.early_stop ? "true" : "false") : "default";
                       }};
    m["eval_gate_mode"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) {
                             c.algo.eval_gate_mode = gate_mode_from_string(v);
                           },
                           [](const AlgoConfig& a) { return to_string(a.eval_gate_mode); }};

    real("dqn.eps_max", [](AlgoConfig& a) -> double& { return a.dqn.eps_max; });
    real("dqn.eps_min", [](AlgoConfig& a) -> double& { return a.dqn.eps_min; });
    integer("dqn.eps_decay_episodes", [](AlgoConfig& a) -> int& { return a.dqn.eps_decay_episodes; });
    integer("dqn.target_update", [](AlgoConfig& a) -> int& { return a.dqn.target_update; });
    size("dqn.buffer_size", [](AlgoConfig& a) -> std::size_t& { return a.dqn.buffer_size; });
    size("dqn.learning_starts", [](AlgoConfig& a) -> std::size_t& { return a.dqn.learning_starts; });
    real("dqn.grad_clip", [](AlgoConfig& a) -> double& { return a.dqn.grad_clip; });
    real("dqn.priority_alpha", [](AlgoConfig& a) -> double& { return a.dqn.priority_alpha; });
    m["dqn.priority_mode"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                if (v == "softmax") {
                                  c.algo.dqn.priority_mode = PriorityMode::softmax;
                                } else if (v == "proportional") {
                                  c.algo.dqn.priority_mode = PriorityMode::proportional;
                                } else {
                                  throw ConfigError(k + ": expected softmax or proportional");
                                }
                              },
                              [](const AlgoConfig& a) {
                                return std::string(a.dqn.priority_mode == PriorityMode::softmax ? "softmax"
                                                                                                : "proportional");
                              }};
    m["dqn.target_gate_mode"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) {
                                   c.algo.dqn.target_gate_mode = gate_mode_from_string(v);
                                 },
                                 [](const AlgoConfig& a) { return to_string(a.dqn.target_gate_mode); }};

    real("ppo.clip", [](AlgoConfig& a) -> double& { return a.ppo.clip; });
    real("ppo.entropy_coef", [](AlgoConfig& a) -> double& { return a.ppo.entropy_coef; });
    real("ppo.gae_lambda", [](AlgoConfig& a) -> double& { return a.ppo.gae_lambda; });
    integer("ppo.rollout_steps", [](AlgoConfig& a) -> int& { return a.ppo.rollout_steps; });
    integer("ppo.epochs", [](AlgoConfig& a) -> int& { return a.ppo.epochs; });
    real("ppo.value_learning_rate", [](AlgoConfig& a) -> double& { return a.ppo.value_learning_rate; });
    real("ppo.grad_clip", [](AlgoConfig& a) -> double& { return a.ppo.grad_clip; });
    m["ppo.normalize_advantages"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                       c.algo.ppo.normalize_advantages = to_bool(k, v);
                                     },
                                     [](const AlgoConfig& a) {
                                       return std::string(a.ppo.normalize_advantages ? "true" : "false");
                                     }};

    m["ddpg.hidden"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          c.algo.ddpg.hidden = int_list(k, v);
                        },
                        [](const AlgoConfig& a) { return num_list(a.ddpg.hidden); }};
    real("ddpg.actor_learning_rate", [](AlgoConfig& a) -> double& { return a.ddpg.actor_learning_rate; });
    real("ddpg.critic_learning_rate", [](AlgoConfig& a) -> double& { return a.ddpg.critic_learning_rate; });
    real("ddpg.tau", [](AlgoConfig& a) -> double& { return a.ddpg.tau; });
    real("ddpg.noise_scale", [](AlgoConfig& a) -> double& { return a.ddpg.noise_scale; });
    real("ddpg.dex_alpha", [](AlgoConfig& a) -> double& { return a.ddpg.dex_alpha; });
    integer("ddpg.knn_k", [](AlgoConfig& a) -> int& { return a.ddpg.knn_k; });
    integer("ddpg.k_future", [](AlgoConfig& a) -> int& { return a.ddpg.k_future; });
    m["ddpg.her"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                       if (v == "future") {
                         c.algo.ddpg.her = HerStrategy::future;
                       } else if (v == "final") {
                         c.algo.ddpg.her = HerStrategy::final;
                       } else {
                         throw ConfigError(k + ": expected future or final");
                       }
                     },
                     [](const AlgoConfig& a) {
                       return std::string(a.ddpg.her == HerStrategy::future ? "future" : "final");
                     }};
    size("ddpg.agent_buffer", [](AlgoConfig& a) -> std::size_t& { return a.ddpg.agent_buffer; });
    size("ddpg.demo_buffer", [](AlgoConfig& a) -> std::size_t& { return a.ddpg.demo_buffer; });
    size("ddpg.expert_batch", [](AlgoConfig& a) -> std::size_t& { return a.ddpg.expert_batch; });
    integer("ddpg.updates_per_episode", [](AlgoConfig& a) -> int& { return a.ddpg.updates_per_episode; });
    real("ddpg.demo_perturbation", [](AlgoConfig& a) -> double& { return a.ddpg.demo_perturbation; });

    m["coefficients"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                           c.coefficients.clear();
                           for (const auto& s : split_list(v)) c.coefficients.push_back(to_double(k, s));
                         },
                         {}};
    m["seeds"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                    c.seeds.clear();
                    for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(k, s));
                    if (!c.seeds.empty()) c.algo.seed = c.seeds.front();
                  },
                  {}};
    m["out"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }, {}};
    m["workers"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.workers = to_int(k, v); },
                    {}};
    m["score_mode"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) {
                         c.score_mode = score_mode_from_string(v);
                       },
                       {}};
    return m;
  }();
  return t;
}

}  // namespace

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& t = table();
  const auto it = t.find(key);
  if (it == t.end()) throw ConfigError("unknown key '" + key + "'");
  try {
    it->second.set(cfg, key, value);
  } catch (const InvalidArgument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : table()) out.push_back(k);
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string describe(const AlgoConfig& cfg) {
  std::string out;
  for (const auto& [k, e] : table()) {
    if (!e.get) continue;
    out += k + " = " + e.get(cfg) + "\n";
  }
  return out;
}

}  // namespace splab
