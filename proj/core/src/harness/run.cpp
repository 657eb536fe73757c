#include "mznav/harness/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mznav/bytes.hpp"
#include "mznav/sim/pgm.hpp"
#include "mznav/sim/render.hpp"

namespace mznav::harness {

namespace {

constexpr std::uint64_t kTagWorkerEnv = 0x100;
constexpr std::uint64_t kTagAgent = 0x200;
constexpr std::uint64_t kTagEvalEnv = 0x300;
constexpr std::uint64_t kTagRenderEnv = 0x400;

std::uint64_t derived_seed(std::uint64_t base, std::uint64_t tag) {
  return Rng::derive(base, tag).next_u64();
}

env::ObservationSpec obs_spec(const RunConfig& cfg) {
  env::ObservationSpec o;
  o.size = cfg.obs_size;
  o.mode = env::sensor_mode_from_name(cfg.sensor);
  return o;
}

env::EpisodeConfig episode_config(const RunConfig& cfg) {
  env::EpisodeConfig e;
  e.horizon = cfg.episode_horizon;
  e.gamma = cfg.algo == "dqn" ? cfg.dqn.gamma : cfg.ppo.gamma;
  e.cd_mode = cfg.cd_mode == "sum" ? sim::CdMode::kSum : sim::CdMode::kMean;
  return e;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw ConfigError("short write: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

std::int64_t Session::agent_step() const {
  return dqn ? dqn->step() : ppo->step();
}

std::int64_t Session::agent_episodes() const {
  return dqn ? dqn->episodes() : ppo->episodes();
}

std::vector<nn::LayerSpec> conv_trunk(int obs_size) {
  using nn::LayerSpec;
  if (obs_size == 84) {
    return {LayerSpec::conv2d(32, 8, 4), LayerSpec::relu(),
            LayerSpec::conv2d(64, 4, 2), LayerSpec::relu(),
            LayerSpec::conv2d(64, 3, 1), LayerSpec::relu(),
            LayerSpec::flatten(),        LayerSpec::dense(512),
            LayerSpec::relu()};
  }
  if (obs_size == 32) {
    return {LayerSpec::conv2d(16, 4, 2), LayerSpec::relu(),
            LayerSpec::conv2d(32, 3, 2), LayerSpec::relu(),
            LayerSpec::conv2d(32, 3, 1), LayerSpec::relu(),
            LayerSpec::flatten(),        LayerSpec::dense(128),
            LayerSpec::relu()};
  }
  throw ContractError("conv_trunk: unsupported observation size");
}

std::unique_ptr<Session> build_session(const RunConfig& cfg) {
  auto s = std::make_unique<Session>();
  s->cfg = cfg;
  s->map = sim::GridMap::load_file(cfg.map);

  const env::ObservationSpec obs = obs_spec(cfg);
  env::DepthPredictor* pred = nullptr;
  if (obs.mode == env::SensorMode::kDepthPred ||
      obs.mode == env::SensorMode::kFused) {
    s->depth_model = depth::load_model(cfg.depth_model);
    s->predictor = std::make_unique<depth::PredictorAdapter>(&*s->depth_model);
    pred = s->predictor.get();
  }

  const env::ActionSpace space = env::ActionSpace::from_name(cfg.action_space);
  const env::EpisodeConfig ep = episode_config(cfg);
  const int workers = cfg.algo == "ppo" ? cfg.workers : 1;
  for (int i = 0; i < workers; ++i) {
    s->envs.push_back(std::make_unique<env::Env>(
        &s->map, space, obs, ep,
        derived_seed(cfg.seed, kTagWorkerEnv + static_cast<std::uint64_t>(i)),
        pred));
    s->adapters.push_back(
        std::make_unique<agents::EnvAdapter>(s->envs.back().get()));
  }

  if (cfg.algo == "dqn") {
    s->dqn = std::make_unique<agents::DqnAgent>(
        s->adapters[0].get(), conv_trunk(cfg.obs_size), cfg.dqn,
        derived_seed(cfg.seed, kTagAgent));
  } else {
    std::vector<agents::AgentEnv*> ptrs;
    for (auto& a : s->adapters) ptrs.push_back(a.get());
    s->ppo = std::make_unique<agents::PpoAgent>(
        ptrs, conv_trunk(cfg.obs_size), conv_trunk(cfg.obs_size), cfg.ppo,
        derived_seed(cfg.seed, kTagAgent));
  }
  return s;
}

namespace {

constexpr char kMagic[4] = {'M', 'Z', 'N', 'V'};
constexpr std::uint16_t kCkptVersion = 1;

void put_section(io::Writer& w, const std::string& name, const char* data,
                 std::size_t size) {
  w.str(name);
  w.u64(size);
  w.bytes(data, size);
}

}  // namespace

std::vector<char> encode_checkpoint(const Checkpoint& c) {
  io::Writer w;
  w.bytes(kMagic, 4);
  w.u16(kCkptVersion);
  w.u32(3);
  put_section(w, "config", c.config_text.data(), c.config_text.size());
  put_section(w, "agent", c.agent_blob.data(), c.agent_blob.size());
  put_section(w, "metrics", c.metrics_text.data(), c.metrics_text.size());
  return w.data();
}

Checkpoint decode_checkpoint(const std::vector<char>& buf) {
  io::Reader r(buf);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw ConfigError("checkpoint: bad magic");
  }
  const std::uint16_t version = r.u16();
  if (version != kCkptVersion) {
    throw ConfigError("checkpoint: unsupported version " +
                      std::to_string(version));
  }
  const std::uint32_t sections = r.u32();
  Checkpoint c;
  bool have_config = false, have_agent = false, have_metrics = false;
  for (std::uint32_t i = 0; i < sections; ++i) {
    const std::string name = r.str();
    const std::uint64_t len = r.u64();
    if (len > r.remaining()) throw ConfigError("checkpoint: truncated section");
    std::vector<char> payload(static_cast<std::size_t>(len));
    if (len > 0) r.bytes(payload.data(), payload.size());
    if (name == "config") {
      c.config_text.assign(payload.begin(), payload.end());
      have_config = true;
    } else if (name == "agent") {
      c.agent_blob = std::move(payload);
      have_agent = true;
    } else if (name == "metrics") {
      c.metrics_text.assign(payload.begin(), payload.end());
      have_metrics = true;
    } else {
      throw ConfigError("checkpoint: unknown section '" + name + "'");
    }
  }
  if (!have_config || !have_agent || !have_metrics) {
    throw ConfigError("checkpoint: missing section");
  }
  if (!r.done()) throw ConfigError("checkpoint: trailing bytes");
  return c;
}

void write_checkpoint(const Checkpoint& c, const std::string& path) {
  io::write_file(path, encode_checkpoint(c));
}

Checkpoint read_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

namespace {

void finish_stats(EvalResult& r) {
  const auto n = static_cast<double>(r.per_episode.size());
  double sum = 0;
  for (double v : r.per_episode) sum += v;
  r.mean = sum / n;
  if (r.per_episode.size() > 1) {
    double ss = 0;
    for (double v : r.per_episode) ss += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(ss / (n - 1.0));
  }
}

// Rolls cfg.eval_episodes anchor episodes in a fresh env; `act` maps state to
// the finished AgentStep.
template <typename ActFn>
EvalResult eval_episodes(Session& s, std::uint64_t env_tag, ActFn act) {
  const RunConfig& cfg = s.cfg;
  env::Env ev(&s.map, env::ActionSpace::from_name(cfg.action_space),
              obs_spec(cfg), episode_config(cfg),
              derived_seed(cfg.seed, env_tag), s.predictor.get());
  agents::EnvAdapter ad(&ev);
  const double hi = 1.15 * cfg.episode_horizon;
  EvalResult r;
  for (int e = 0; e < cfg.eval_episodes; ++e) {
    nn::Tensor st = ad.reset(true);
    double ret = 0;
    while (true) {
      agents::AgentStep out = act(ad, st);
      ret += out.reward;
      st = std::move(out.state);
      if (out.done) break;
    }
    if (!std::isfinite(ret) || ret < -1.0 - 1e-9 || ret > hi + 1e-9) {
      throw NumericError("eval return " + std::to_string(ret) +
                         " outside [-1, " + std::to_string(hi) + "]");
    }
    r.per_episode.push_back(ret);
  }
  finish_stats(r);
  return r;
}

}  // namespace

EvalResult run_eval(Session& s) {
  return eval_episodes(
      s, kTagEvalEnv, [&s](agents::EnvAdapter& ad, const nn::Tensor& st) {
        if (s.dqn) return ad.step(s.dqn->greedy_action(st));
        if (!ad.is_continuous()) return ad.step(s.ppo->eval_action(st));
        return ad.step_continuous(s.ppo->eval_action_mean(st));
      });
}

EvalResult run_eval_random(Session& s, std::uint64_t rng_seed) {
  Rng rng = Rng::derive(rng_seed, 0x72616e64);
  return eval_episodes(
      s, kTagEvalEnv, [&rng](agents::EnvAdapter& ad, const nn::Tensor&) {
        if (ad.is_continuous()) {
          return ad.step_continuous({rng.normal(), rng.normal()});
        }
        const auto n = static_cast<std::uint64_t>(ad.action_count());
        return ad.step(static_cast<int>(rng.range(n)));
      });
}

namespace {

std::string metrics_header(const std::string& algo) {
  if (algo == "dqn") {
    return "step,episodes,train_reward,eval_mean,eval_std,loss,q_mean,"
           "epsilon\n";
  }
  return "step,episodes,train_reward,eval_mean,eval_std,policy_loss,"
         "value_loss,entropy,approx_kl,clip_frac\n";
}

std::string metrics_row(const Session& s, double train_reward,
                        const EvalResult& ev, const agents::DqnMetrics* dm,
                        const agents::PpoMetrics* pm) {
  std::ostringstream row;
  row << s.agent_step() << ',' << s.agent_episodes() << ','
      << fmt_g(train_reward) << ',' << fmt_g(ev.mean) << ','
      << fmt_g(ev.stddev);
  if (dm != nullptr) {
    row << ',' << fmt_g(dm->loss) << ',' << fmt_g(dm->q_mean) << ','
        << fmt_g(dm->epsilon);
  } else {
    row << ',' << fmt_g(pm->policy_loss) << ',' << fmt_g(pm->value_loss) << ','
        << fmt_g(pm->entropy) << ',' << fmt_g(pm->approx_kl) << ','
        << fmt_g(pm->clip_frac);
  }
  row << '\n';
  return row.str();
}

}  // namespace

TrainResult run_train(const RunConfig& cfg, const std::string& out_dir,
                      const Checkpoint* resume) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto s = build_session(cfg);

  std::string metrics = metrics_header(cfg.algo);
  if (resume != nullptr) {
    io::Reader r(resume->agent_blob);
    if (s->dqn) {
      s->dqn->deserialize(r);
    } else {
      s->ppo->deserialize(r);
    }
    if (!r.done()) throw ConfigError("checkpoint: trailing agent bytes");
    metrics = resume->metrics_text;
  }

  TrainResult res;
  res.metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  res.ckpt_path = (fs::path(out_dir) / "ckpt.bin").string();
  res.final_ckpt_path = (fs::path(out_dir) / "ckpt_final.bin").string();
  const std::string timing_path = (fs::path(out_dir) / "timing.csv").string();

  write_text(res.metrics_path, metrics);

  const auto make_ckpt = [&]() {
    Checkpoint c;
    c.config_text = canonical_config_text(cfg);
    io::Writer w;
    if (s->dqn) {
      s->dqn->serialize(w);
    } else {
      s->ppo->serialize(w);
    }
    c.agent_blob = w.data();
    c.metrics_text = metrics;
    return c;
  };

  // Wall-clock stays out of the checkpointed metrics so runs are replayable;
  // it lands in a sidecar instead.
  std::string timing = resume != nullptr && fs::exists(timing_path)
                           ? read_text(timing_path)
                           : std::string("step,wall_seconds\n");
  const auto t0 = std::chrono::steady_clock::now();

  std::int64_t step = s->agent_step();
  while (step < cfg.total_steps) {
    const std::int64_t target = std::min<std::int64_t>(
        cfg.total_steps, (step / cfg.eval_period + 1) * cfg.eval_period);
    agents::DqnMetrics dm;
    agents::PpoMetrics pm;
    double train_reward = 0;
    if (s->dqn) {
      dm = s->dqn->advance(target - step);
      train_reward = dm.train_reward;
    } else {
      pm = s->ppo->advance(target - step);
      train_reward = pm.train_reward;
    }
    step = s->agent_step();

    res.last_eval = run_eval(*s);
    metrics += metrics_row(*s, train_reward, res.last_eval,
                           s->dqn ? &dm : nullptr, s->dqn ? nullptr : &pm);
    write_text(res.metrics_path, metrics);
    write_checkpoint(make_ckpt(), res.ckpt_path);

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    timing += std::to_string(step) + ',' + fmt_g(elapsed) + '\n';
    write_text(timing_path, timing);
  }

  const Checkpoint final_ckpt = make_ckpt();
  write_checkpoint(final_ckpt, res.ckpt_path);
  write_checkpoint(final_ckpt, res.final_ckpt_path);
  return res;
}

RenderResult run_render(const RunConfig& cfg, const Checkpoint* agent_ckpt,
                        const std::string& out_dir, int steps) {
  namespace fs = std::filesystem;
  if (steps < 1) throw ConfigError("render: steps must be positive");
  fs::create_directories(out_dir);
  auto s = build_session(cfg);
  if (agent_ckpt != nullptr) {
    io::Reader r(agent_ckpt->agent_blob);
    if (s->dqn) {
      s->dqn->deserialize(r);
    } else {
      s->ppo->deserialize(r);
    }
  }

  env::Env ev(&s->map, env::ActionSpace::from_name(cfg.action_space),
              obs_spec(cfg), episode_config(cfg),
              derived_seed(cfg.seed, kTagRenderEnv), s->predictor.get());
  agents::EnvAdapter ad(&ev);
  nn::Tensor st = ad.reset(true);

  std::string traj;
  RenderResult out;
  for (int i = 0; i < steps; ++i) {
    const sim::Pose pose = ev.pose();
    sim::RenderOutput frame = sim::render_camera(s->map, pose, cfg.obs_size);
    char name[32];
    std::snprintf(name, sizeof(name), "%04d_gray.pgm", i);
    sim::write_pgm((fs::path(out_dir) / name).string(), frame.gray);
    std::snprintf(name, sizeof(name), "%04d_depth.pgm", i);
    sim::write_pgm((fs::path(out_dir) / name).string(), frame.depth);

    agents::AgentStep r;
    if (s->dqn) {
      r = ad.step(s->dqn->greedy_action(st));
    } else if (!ad.is_continuous()) {
      r = ad.step(s->ppo->eval_action(st));
    } else {
      r = ad.step_continuous(s->ppo->eval_action_mean(st));
    }
    out.episode_reward += r.reward;
    ++out.steps;

    char line[160];
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g %.17g\n", pose.x,
                  pose.y, pose.theta, r.reward);
    traj += line;

    st = std::move(r.state);
    if (r.done) break;
  }
  write_text((fs::path(out_dir) / "traj.txt").string(), traj);
  return out;
}

namespace {

struct MetricsFile {
  std::string header;
  std::vector<std::int64_t> steps;
  std::vector<double> eval_means;
};

MetricsFile parse_metrics(const std::string& path) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  MetricsFile mf;
  if (!std::getline(in, mf.header)) {
    throw ConfigError("aggregate: empty metrics file " + path);
  }
  std::vector<std::string> cols;
  {
    std::istringstream hs(mf.header);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
  }
  int step_col = -1, mean_col = -1;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] == "step") step_col = static_cast<int>(i);
    if (cols[i] == "eval_mean") mean_col = static_cast<int>(i);
  }
  if (step_col < 0 || mean_col < 0) {
    throw ConfigError("aggregate: " + path +
                      " lacks step/eval_mean columns");
  }
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) f.push_back(c);
    if (f.size() != cols.size()) {
      throw ConfigError("aggregate: " + path + ":" + std::to_string(lineno) +
                        ": expected " + std::to_string(cols.size()) +
                        " fields");
    }
    try {
      mf.steps.push_back(std::stoll(f[static_cast<std::size_t>(step_col)]));
      mf.eval_means.push_back(
          std::stod(f[static_cast<std::size_t>(mean_col)]));
    } catch (const std::exception&) {
      throw ConfigError("aggregate: " + path + ":" + std::to_string(lineno) +
                        ": bad number");
    }
  }
  return mf;
}

}  // namespace

void aggregate_metrics(const std::vector<std::string>& inputs,
                       const std::string& out_path) {
  if (inputs.empty()) throw ConfigError("aggregate: no input files");
  std::vector<MetricsFile> files;
  for (const auto& p : inputs) files.push_back(parse_metrics(p));
  for (std::size_t i = 1; i < files.size(); ++i) {
    if (files[i].header != files[0].header) {
      throw ConfigError("aggregate: header of " + inputs[i] +
                        " differs from " + inputs[0]);
    }
  }

  std::string misaligned;
  const std::size_t rows = files[0].steps.size();
  for (std::size_t i = 1; i < files.size(); ++i) {
    const std::size_t n = std::min(rows, files[i].steps.size());
    for (std::size_t row = 0; row < n; ++row) {
      if (files[i].steps[row] != files[0].steps[row]) {
        misaligned += " row " + std::to_string(row + 1) + ": " +
                      std::to_string(files[0].steps[row]) + " vs " +
                      std::to_string(files[i].steps[row]) + " (" + inputs[i] +
                      ")";
      }
    }
    if (files[i].steps.size() != rows) {
      misaligned += " " + inputs[i] + " has " +
                    std::to_string(files[i].steps.size()) + " rows, expected " +
                    std::to_string(rows);
    }
  }
  if (!misaligned.empty()) {
    throw ConfigError("aggregate: step sequences differ:" + misaligned);
  }

  const auto n = static_cast<double>(files.size());
  std::string out = "step,n,mean,std,ci95\n";
  for (std::size_t row = 0; row < rows; ++row) {
    double sum = 0;
    for (const auto& f : files) sum += f.eval_means[row];
    const double mean = sum / n;
    out += std::to_string(files[0].steps[row]) + ',' +
           std::to_string(files.size()) + ',' + fmt_g(mean) + ',';
    if (files.size() > 1) {
      double ss = 0;
      for (const auto& f : files) {
        ss += (f.eval_means[row] - mean) * (f.eval_means[row] - mean);
      }
      const double sd = std::sqrt(ss / (n - 1.0));
      out += fmt_g(sd) + ',' + fmt_g(1.96 * sd / std::sqrt(n));
    } else {
      out += ',';
    }
    out += '\n';
  }
  write_text(out_path, out);
}

}  // namespace mznav::harness
