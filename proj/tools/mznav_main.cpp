// mznav: train/eval/render navigation agents and the depth predictor.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime or numeric error.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mznav/depth/dataset.hpp"
#include "mznav/depth/gan.hpp"
#include "mznav/harness/config.hpp"
#include "mznav/harness/run.hpp"

namespace {

namespace fs = std::filesystem;
using namespace mznav;

struct CommonOpts {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool out_required) {
  cmd->add_option("--config", o.config, "run config file");
  auto* out = cmd->add_option("--out", o.out, "output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_option("--set", o.sets, "config override key=value (repeatable)");
}

// Resolves the effective config: from a checkpoint's embedded echo when one
// is given, otherwise from --config, then --seed/--set on top.
harness::RunConfig effective_config(const CommonOpts& o,
                                    const harness::Checkpoint* ckpt) {
  harness::RunConfig cfg;
  if (ckpt != nullptr) {
    cfg = harness::parse_config_text(ckpt->config_text);
  } else if (!o.config.empty()) {
    cfg = harness::parse_config_file(o.config);
  } else {
    throw ConfigError("--config is required");
  }
  harness::apply_overrides(cfg, o.sets);
  if (o.seed) cfg.seed = *o.seed;
  harness::resolve_auto_fields(cfg);
  harness::validate(cfg);
  return cfg;
}

int cmd_train(const CommonOpts& o, const std::string& resume_path) {
  std::optional<harness::Checkpoint> resume;
  if (!resume_path.empty()) {
    resume = harness::read_checkpoint(resume_path);
  }
  const harness::RunConfig cfg =
      effective_config(o, resume ? &*resume : nullptr);
  const harness::TrainResult r =
      harness::run_train(cfg, o.out, resume ? &*resume : nullptr);
  std::printf("trained to step %lld\n",
              static_cast<long long>(cfg.total_steps));
  std::printf("metrics: %s\n", r.metrics_path.c_str());
  std::printf("checkpoint: %s\n", r.final_ckpt_path.c_str());
  if (!r.last_eval.per_episode.empty()) {
    std::printf("final eval: %.6g +- %.6g over %zu episodes\n",
                r.last_eval.mean, r.last_eval.stddev,
                r.last_eval.per_episode.size());
  }
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& ckpt_path, bool random) {
  std::optional<harness::Checkpoint> ckpt;
  if (!ckpt_path.empty()) {
    ckpt = harness::read_checkpoint(ckpt_path);
  } else if (!random) {
    throw ConfigError("eval: --ckpt is required unless --random is given");
  }
  const harness::RunConfig cfg = effective_config(o, ckpt ? &*ckpt : nullptr);
  auto s = harness::build_session(cfg);
  harness::EvalResult r;
  if (random) {
    r = harness::run_eval_random(*s, cfg.seed);
  } else {
    io::Reader reader(ckpt->agent_blob);
    if (s->dqn) {
      s->dqn->deserialize(reader);
    } else {
      s->ppo->deserialize(reader);
    }
    r = harness::run_eval(*s);
  }
  for (std::size_t i = 0; i < r.per_episode.size(); ++i) {
    std::printf("episode %zu: %.6g\n", i, r.per_episode[i]);
  }
  std::printf("mean %.6g std %.6g over %zu episodes\n", r.mean, r.stddev,
              r.per_episode.size());
  return 0;
}

int cmd_render(const CommonOpts& o, const std::string& ckpt_path, int steps) {
  std::optional<harness::Checkpoint> ckpt;
  if (!ckpt_path.empty()) ckpt = harness::read_checkpoint(ckpt_path);
  const harness::RunConfig cfg = effective_config(o, ckpt ? &*ckpt : nullptr);
  const harness::RenderResult r =
      harness::run_render(cfg, ckpt ? &*ckpt : nullptr, o.out, steps);
  std::printf("rendered %d steps, episode reward %.6g\n", r.steps,
              r.episode_reward);
  std::printf("frames and traj.txt in %s\n", o.out.c_str());
  return 0;
}

int cmd_depth_collect(const CommonOpts& o) {
  const harness::RunConfig cfg = effective_config(o, nullptr);
  const sim::GridMap map = sim::GridMap::load_file(cfg.map);
  Rng rng = Rng::derive(cfg.seed, 0x636f6c6c);
  const auto policy = cfg.depth_policy == "scan"
                          ? depth::CollectPolicy::kScan
                          : depth::CollectPolicy::kRandomSafe;
  const depth::PairDataset ds =
      depth::collect_pairs(map, cfg.depth_pairs, rng, policy);
  depth::save_dataset(ds, o.out);
  std::printf("collected %d pairs (%zu train, %zu holdout) into %s\n",
              cfg.depth_pairs, ds.train.size(), ds.holdout.size(),
              o.out.c_str());
  return 0;
}

int cmd_depth_train(const CommonOpts& o, const std::string& data_dir) {
  const harness::RunConfig cfg = effective_config(o, nullptr);
  const depth::PairDataset ds = depth::load_dataset(data_dir);
  depth::GanTrainConfig gan = cfg.gan;
  gan.seed = cfg.seed;
  const depth::DepthTrainResult r = depth::train_depth(ds, gan);

  fs::create_directories(o.out);
  const std::string model_path = (fs::path(o.out) / "depth_model.bin").string();
  depth::save_model(r.model, model_path);
  std::string losses = "epoch,d_loss,g_adv,g_l1\n";
  for (std::size_t e = 0; e < r.losses.size(); ++e) {
    char line[160];
    std::snprintf(line, sizeof(line), "%zu,%.6g,%.6g,%.6g\n", e + 1,
                  r.losses[e].d_loss, r.losses[e].g_adv, r.losses[e].g_l1);
    losses += line;
  }
  io::write_file((fs::path(o.out) / "losses.csv").string(),
                 std::vector<char>(losses.begin(), losses.end()));
  if (r.diverged) {
    std::fprintf(stderr,
                 "training diverged after %zu epochs; saved the last finite "
                 "snapshot\n",
                 r.losses.size());
    return 3;
  }
  std::printf("model: %s\n", model_path.c_str());
  if (!r.losses.empty()) {
    const auto& last = r.losses.back();
    std::printf("final epoch: d_loss %.6g g_adv %.6g g_l1 %.6g\n", last.d_loss,
                last.g_adv, last.g_l1);
  }
  return 0;
}

int cmd_depth_eval(const std::string& data_dir, const std::string& model_path) {
  const depth::PairDataset ds = depth::load_dataset(data_dir);
  const depth::DepthModel model = depth::load_model(model_path);
  const depth::DepthEval ev = depth::evaluate_depth(model, ds);
  for (std::size_t i = 0; i < ev.per_pair.size(); ++i) {
    std::printf("pair %zu: L1 %.6g\n", i, ev.per_pair[i]);
  }
  std::printf("holdout mean L1 %.6g over %zu pairs\n", ev.mean_l1,
              ev.per_pair.size());
  return 0;
}

int cmd_aggregate(const std::vector<std::string>& inputs,
                  const std::string& out) {
  harness::aggregate_metrics(inputs, out);
  std::printf("aggregated %zu files into %s\n", inputs.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maze navigation training harness"};
  app.require_subcommand(1);

  CommonOpts train_o, eval_o, render_o, collect_o, dtrain_o;
  std::string resume_path, eval_ckpt, render_ckpt;
  std::string dtrain_data, deval_data, deval_model, agg_out;
  std::vector<std::string> agg_inputs;
  bool eval_random = false;
  int render_steps = 200;

  auto* train = app.add_subcommand("train", "train an agent");
  add_common(train, train_o, true);
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_o, false);
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file");
  eval->add_flag("--random", eval_random,
                 "ignore the learned policy and act uniformly at random");

  auto* render = app.add_subcommand("render", "dump frames and a trajectory");
  add_common(render, render_o, true);
  render->add_option("--ckpt", render_ckpt, "checkpoint file (optional)");
  render->add_option("--steps", render_steps, "max steps to roll out")
      ->check(CLI::PositiveNumber);

  auto* collect = app.add_subcommand("depth-collect", "build a gray/depth "
                                                      "pair dataset");
  add_common(collect, collect_o, true);

  auto* dtrain = app.add_subcommand("depth-train", "train the depth predictor");
  add_common(dtrain, dtrain_o, true);
  dtrain->add_option("--data", dtrain_data, "dataset directory")->required();

  auto* deval = app.add_subcommand("depth-eval", "holdout L1 of a depth model");
  deval->add_option("--data", deval_data, "dataset directory")->required();
  deval->add_option("--model", deval_model, "depth model file")->required();

  auto* agg = app.add_subcommand("aggregate", "aggregate metrics across seeds");
  agg->add_option("--out", agg_out, "output CSV")->required();
  agg->add_option("inputs", agg_inputs, "per-seed metrics.csv files")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(train_o, resume_path);
    if (eval->parsed()) return cmd_eval(eval_o, eval_ckpt, eval_random);
    if (render->parsed()) return cmd_render(render_o, render_ckpt,
                                            render_steps);
    if (collect->parsed()) return cmd_depth_collect(collect_o);
    if (dtrain->parsed()) return cmd_depth_train(dtrain_o, dtrain_data);
    if (deval->parsed()) return cmd_depth_eval(deval_data, deval_model);
    if (agg->parsed()) return cmd_aggregate(agg_inputs, agg_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
