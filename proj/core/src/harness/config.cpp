#include "mznav/harness/config.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <sstream>

#include "mznav/bytes.hpp"
#include "mznav/env/actions.hpp"
#include "mznav/env/env.hpp"

namespace mznav::harness {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// A key registry drives parsing, canonical output, and unknown-key
// rejection from one table.
struct Binder {
  RunConfig* cfg;

  struct Entry {
    std::string key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
  };
  std::vector<Entry> entries;

  void str_field(const std::string& key, std::string* f) {
    entries.push_back({key, [f](const std::string& v) { *f = v; },
                       [f] { return *f; }});
  }
  void bool_field(const std::string& key, bool* f) {
    entries.push_back({key,
                       [key, f](const std::string& v) {
                         if (v == "true") {
                           *f = true;
                         } else if (v == "false") {
                           *f = false;
                         } else {
                           throw ConfigError("config: " + key +
                                             " expects true|false, got '" + v +
                                             "'");
                         }
                       },
                       [f] { return *f ? "true" : "false"; }});
  }
  template <typename T>
  void int_field(const std::string& key, T* f) {
    entries.push_back({key,
                       [key, f](const std::string& v) {
                         std::int64_t out = 0;
                         std::size_t pos = 0;
                         try {
                           out = std::stoll(v, &pos);
                         } catch (const std::exception&) {
                           pos = std::string::npos;
                         }
                         if (pos != v.size() || v.empty()) {
                           throw ConfigError("config: " + key +
                                             " expects an integer, got '" + v +
                                             "'");
                         }
                         *f = static_cast<T>(out);
                       },
                       [f] { return std::to_string(*f); }});
  }
  void u64_field(const std::string& key, std::uint64_t* f) {
    entries.push_back({key,
                       [key, f](const std::string& v) {
                         std::uint64_t out = 0;
                         std::size_t pos = 0;
                         try {
                           out = std::stoull(v, &pos);
                         } catch (const std::exception&) {
                           pos = std::string::npos;
                         }
                         if (pos != v.size() || v.empty()) {
                           throw ConfigError("config: " + key +
                                             " expects an unsigned integer, "
                                             "got '" +
                                             v + "'");
                         }
                         *f = out;
                       },
                       [f] { return std::to_string(*f); }});
  }
  void double_field(const std::string& key, double* f) {
    entries.push_back({key,
                       [key, f](const std::string& v) {
                         double out = 0;
                         std::size_t pos = 0;
                         try {
                           out = std::stod(v, &pos);
                         } catch (const std::exception&) {
                           pos = std::string::npos;
                         }
                         if (pos != v.size() || v.empty()) {
                           throw ConfigError("config: " + key +
                                             " expects a number, got '" + v +
                                             "'");
                         }
                         *f = out;
                       },
                       [f] { return fmt_double(*f); }});
  }

  const Entry* find(const std::string& key) const {
    for (const auto& e : entries) {
      if (e.key == key) return &e;
    }
    return nullptr;
  }
};

Binder make_binder(RunConfig& c) {
  Binder b;
  b.cfg = &c;
  b.str_field("map", &c.map);
  b.str_field("algo", &c.algo);
  b.str_field("action_space", &c.action_space);
  b.str_field("sensor", &c.sensor);
  b.int_field("obs_size", &c.obs_size);
  b.u64_field("seed", &c.seed);
  b.int_field("total_steps", &c.total_steps);
  b.int_field("eval_period", &c.eval_period);
  b.int_field("eval_episodes", &c.eval_episodes);
  b.int_field("workers", &c.workers);
  b.int_field("episode.horizon", &c.episode_horizon);
  b.str_field("episode.cd_mode", &c.cd_mode);
  b.str_field("depth.model", &c.depth_model);
  b.int_field("depth.pairs", &c.depth_pairs);
  b.str_field("depth.policy", &c.depth_policy);

  b.double_field("dqn.gamma", &c.dqn.gamma);
  b.double_field("dqn.lr", &c.dqn.lr);
  b.int_field("dqn.batch", &c.dqn.batch_size);
  b.int_field("dqn.target_sync", &c.dqn.target_sync);
  b.double_field("dqn.eps_start", &c.dqn.eps_start);
  b.double_field("dqn.eps_end", &c.dqn.eps_end);
  b.int_field("dqn.eps_decay_steps", &c.dqn.eps_decay_steps);
  b.int_field("dqn.learn_start", &c.dqn.learn_start);
  b.int_field("dqn.train_freq", &c.dqn.train_freq);
  b.bool_field("dqn.double", &c.dqn.double_q);
  b.bool_field("dqn.dueling", &c.dqn.dueling);
  b.int_field("dqn.replay_capacity", &c.dqn.replay.capacity);
  b.double_field("dqn.per_alpha", &c.dqn.replay.alpha);
  b.double_field("dqn.per_eps", &c.dqn.replay.eps_p);
  b.double_field("dqn.per_beta0", &c.dqn.per_beta0);
  b.int_field("dqn.per_beta_steps", &c.dqn.per_beta_steps);
  b.bool_field("dqn.mse", &c.dqn.mse);
  b.double_field("dqn.grad_clip", &c.dqn.grad_clip);

  b.double_field("ppo.gamma", &c.ppo.gamma);
  b.double_field("ppo.lambda", &c.ppo.lam);
  b.double_field("ppo.clip", &c.ppo.clip_eps);
  b.int_field("ppo.epochs", &c.ppo.epochs);
  b.int_field("ppo.minibatch", &c.ppo.minibatch);
  b.int_field("ppo.horizon", &c.ppo.horizon);
  b.double_field("ppo.value_coef", &c.ppo.c_v);
  b.double_field("ppo.entropy_coef", &c.ppo.c_e);
  b.double_field("ppo.lr", &c.ppo.lr);
  b.double_field("ppo.grad_clip", &c.ppo.grad_clip);
  b.bool_field("ppo.fixed_sigma", &c.ppo.fixed_sigma);
  b.double_field("ppo.kl_cap", &c.ppo.kl_hard_cap);

  b.int_field("gan.epochs", &c.gan.epochs);
  b.double_field("gan.lambda_l1", &c.gan.lambda_l1);
  b.double_field("gan.lr", &c.gan.lr);
  b.double_field("gan.beta1", &c.gan.beta1);
  b.int_field("gan.batch", &c.gan.batch);
  b.bool_field("gan.l1_only", &c.gan.l1_only);
  return b;
}

void assign(Binder& b, const std::string& key, const std::string& value,
            const std::string& where) {
  const Binder::Entry* e = b.find(key);
  if (!e) {
    throw ConfigError("config: unknown key '" + key + "'" + where);
  }
  e->set(value);
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  Binder b = make_binder(cfg);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not 'key = value': '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config: empty key at line " + std::to_string(lineno));
    }
    assign(b, key, value, " (line " + std::to_string(lineno) + ")");
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  const std::vector<char> buf = io::read_file(path);
  return parse_config_text(std::string(buf.begin(), buf.end()));
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets) {
  Binder b = make_binder(cfg);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + s + "'");
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    assign(b, key, value, " (--set)");
  }
}

void resolve_auto_fields(RunConfig& cfg) {
  if (cfg.dqn.eps_decay_steps == 0) {
    cfg.dqn.eps_decay_steps = std::max<std::int64_t>(1, cfg.total_steps / 10);
  }
  if (cfg.dqn.per_beta_steps == 0) {
    cfg.dqn.per_beta_steps = std::max<std::int64_t>(1, cfg.total_steps);
  }
}

void validate(const RunConfig& cfg) {
  if (cfg.algo != "dqn" && cfg.algo != "ppo") {
    throw ConfigError("config: algo must be dqn|ppo, got '" + cfg.algo + "'");
  }
  env::ActionSpace::from_name(cfg.action_space);
  env::sensor_mode_from_name(cfg.sensor);
  if (cfg.obs_size != 84 && cfg.obs_size != 32) {
    throw ConfigError("config: obs_size must be 84 or 32");
  }
  if (cfg.total_steps < 0) throw ConfigError("config: total_steps < 0");
  if (cfg.eval_period < 1) throw ConfigError("config: eval_period < 1");
  if (cfg.eval_episodes < 1) throw ConfigError("config: eval_episodes < 1");
  if (cfg.workers < 1) throw ConfigError("config: workers < 1");
  if (cfg.algo == "dqn" && cfg.workers != 1) {
    throw ConfigError("config: dqn supports a single worker");
  }
  if (cfg.algo == "dqn" && cfg.action_space == "continuous") {
    throw ConfigError("config: dqn needs a discrete action space");
  }
  if (cfg.episode_horizon < 1) throw ConfigError("config: episode.horizon < 1");
  if (cfg.cd_mode != "mean" && cfg.cd_mode != "sum") {
    throw ConfigError("config: episode.cd_mode must be mean|sum");
  }
  const env::SensorMode mode = env::sensor_mode_from_name(cfg.sensor);
  if ((mode == env::SensorMode::kDepthPred || mode == env::SensorMode::kFused) &&
      cfg.depth_model.empty()) {
    throw ConfigError("config: sensor '" + cfg.sensor +
                      "' requires depth.model");
  }
  if ((mode == env::SensorMode::kDepthPred || mode == env::SensorMode::kFused) &&
      cfg.obs_size != depth::DepthModel::kSize) {
    throw ConfigError("config: predicted-depth sensors require obs_size 84");
  }
  if (cfg.depth_pairs < 1) throw ConfigError("config: depth.pairs < 1");
  if (cfg.depth_policy != "random_safe" && cfg.depth_policy != "scan") {
    throw ConfigError("config: depth.policy must be random_safe|scan");
  }
}

std::string canonical_config_text(const RunConfig& cfg) {
  RunConfig copy = cfg;
  Binder b = make_binder(copy);
  std::string out;
  for (const auto& e : b.entries) {
    out += e.key;
    out += " = ";
    out += e.get();
    out += "\n";
  }
  return out;
}

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& sets) {
  RunConfig cfg =
      config_path.empty() ? RunConfig{} : parse_config_file(config_path);
  apply_overrides(cfg, sets);
  resolve_auto_fields(cfg);
  validate(cfg);
  return cfg;
}

}  // namespace mznav::harness
