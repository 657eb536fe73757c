#include <benchmark/benchmark.h>

#include <vector>

#include "mznav/agents/gae.hpp"
#include "mznav/agents/replay.hpp"
#include "mznav/common.hpp"
#include "mznav/depth/gan.hpp"
#include "mznav/harness/run.hpp"
#include "mznav/nn/adam.hpp"
#include "mznav/nn/layers.hpp"
#include "mznav/sim/geometry.hpp"
#include "mznav/sim/map.hpp"
#include "mznav/sim/render.hpp"

namespace {

using namespace mznav;

const sim::GridMap& bench_map() {
  static const sim::GridMap map = sim::GridMap::parse(
      "################\n"
      "#..............#\n"
      "#..####..####..#\n"
      "#..#..........##\n"
      "#..#..######..##\n"
      "#..............#\n"
      "################\n");
  return map;
}

nn::Network make_trunk(int obs, int stack, int head_units) {
  auto specs = harness::conv_trunk(obs);
  specs.push_back(nn::LayerSpec::dense(head_units));
  nn::Network net(specs, {obs, obs, stack});
  Rng rng(7);
  net.init_params(rng);
  return net;
}

nn::Tensor random_batch(int n, int obs, int stack, Rng& rng) {
  nn::Tensor x({n, obs, obs, stack});
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    x[i] = static_cast<float>(rng.uniform());
  }
  return x;
}

void bm_forward(benchmark::State& state) {
  const int obs = static_cast<int>(state.range(0));
  const int batch = static_cast<int>(state.range(1));
  nn::Network net = make_trunk(obs, 4, 5);
  Rng rng(11);
  const nn::Tensor x = random_batch(batch, obs, 4, rng);
  for (auto _ : state) {
    auto acts = nn::forward(net, x);
    benchmark::DoNotOptimize(nn::output(acts).data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(bm_forward)->Args({84, 1})->Args({84, 64})->Args({32, 1})->Args({32, 64});

void bm_forward_backward(benchmark::State& state) {
  const int obs = static_cast<int>(state.range(0));
  const int batch = static_cast<int>(state.range(1));
  nn::Network net = make_trunk(obs, 4, 5);
  Rng rng(12);
  const nn::Tensor x = random_batch(batch, obs, 4, rng);
  for (auto _ : state) {
    auto acts = nn::forward(net, x);
    nn::Tensor g(nn::output(acts).shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = 1.0f;
    auto grads = nn::backward(net, acts, g);
    benchmark::DoNotOptimize(grads.data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(bm_forward_backward)->Args({84, 32})->Args({32, 32});

void bm_adam_step(benchmark::State& state) {
  const int obs = static_cast<int>(state.range(0));
  nn::Network net = make_trunk(obs, 4, 5);
  std::vector<nn::Tensor> grads;
  for (const auto& p : net.mutable_params()) {
    nn::Tensor g(p.value.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = 1e-4f;
    grads.push_back(std::move(g));
  }
  nn::AdamState adam;
  adam.init(net.mutable_params(), {});
  for (auto _ : state) {
    nn::adam_step(net.mutable_params(), grads, adam);
  }
}
BENCHMARK(bm_adam_step)->Arg(84)->Arg(32);

void bm_cast_ray(benchmark::State& state) {
  const sim::GridMap& map = bench_map();
  double theta = 0.0;
  for (auto _ : state) {
    theta += 0.01;
    benchmark::DoNotOptimize(sim::cast_ray(map, 4.5, 3.5, theta));
  }
}
BENCHMARK(bm_cast_ray);

void bm_range_scan(benchmark::State& state) {
  const sim::GridMap& map = bench_map();
  const sim::Pose pose{4.5, 3.5, 0.7};
  for (auto _ : state) {
    benchmark::DoNotOptimize(sim::range_scan(map, pose).data());
  }
}
BENCHMARK(bm_range_scan);

void bm_render_camera(benchmark::State& state) {
  const sim::GridMap& map = bench_map();
  const sim::Pose pose{4.5, 3.5, 0.7};
  const int size = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sim::render_camera(map, pose, size).gray.data());
  }
}
BENCHMARK(bm_render_camera)->Arg(84)->Arg(32);

void bm_replay_sample(benchmark::State& state) {
  agents::ReplayConfig rc;
  rc.capacity = 100000;
  agents::PrioritizedReplay buf(rc, {32, 32, 1}, 4);
  Rng rng(13);
  nn::Tensor frame({32, 32, 1});
  for (std::int64_t i = 0; i < frame.numel(); ++i) {
    frame[i] = static_cast<float>(rng.uniform());
  }
  buf.begin_episode(frame);
  for (int i = 0; i < 50000; ++i) {
    buf.push(frame, static_cast<int>(rng.range(5)), rng.uniform(), false);
  }
  for (auto _ : state) {
    auto s = buf.sample(32, 0.5, rng);
    benchmark::DoNotOptimize(s.states.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(bm_replay_sample);

void bm_gae(benchmark::State& state) {
  Rng rng(14);
  const std::size_t t_len = 2048;
  std::vector<double> r(t_len), v(t_len + 1);
  std::vector<std::uint8_t> d(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    r[t] = rng.uniform(-1, 1);
    v[t] = rng.uniform(-1, 1);
    d[t] = rng.uniform() < 0.01 ? 1 : 0;
  }
  v[t_len] = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(agents::gae(r, v, d, 0.99, 0.95).advantages.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int>(t_len));
}
BENCHMARK(bm_gae);

void bm_depth_generator(benchmark::State& state) {
  depth::DepthModel model;
  model.init(15);
  Rng rng(16);
  nn::Tensor gray({1, 84, 84, 1});
  for (std::int64_t i = 0; i < gray.numel(); ++i) {
    gray[i] = static_cast<float>(rng.uniform());
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(depth::generator_forward(model, gray).data());
  }
}
BENCHMARK(bm_depth_generator);

}  // namespace

BENCHMARK_MAIN();
