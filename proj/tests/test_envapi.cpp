#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mznav/env/env.hpp"
#include "mznav/sim/render.hpp"

using namespace mznav;
using namespace mznav::env;
using mznav::sim::GridMap;
using mznav::sim::SpawnMode;

namespace {

// Anchor in the left corridor cell facing +x; wall face ahead at x = 3.0.
const char* kCorridorMap =
    "########\n"
    "#S....##\n"
    "#.....##\n"
    "########\n"
    "spawn_theta=0\n";

const char* kRoomMap =
    "##########\n"
    "#........#\n"
    "#...S....#\n"
    "#........#\n"
    "#........#\n"
    "##########\n"
    "spawn_theta=0.5\n";

struct CountingPredictor : DepthPredictor {
  int calls = 0;
  nn::Tensor predict(const nn::Tensor& gray) override {
    ++calls;
    nn::Tensor out = gray;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0f - out[i];
    return out;
  }
};

ObservationSpec small_obs(SensorMode mode) {
  ObservationSpec o;
  o.size = 32;
  o.mode = mode;
  return o;
}

}  // namespace

TEST_CASE("action mappings") {
  SUBCASE("disc5 table") {
    ActionSpace s = ActionSpace::disc5();
    REQUIRE(s.size() == 5);
    auto fwd = map_discrete_action(s, 0);
    CHECK(fwd.v == 0.3);
    CHECK(fwd.omega == 0.0);
    auto hard_right = map_discrete_action(s, 1);
    CHECK(hard_right.v == 0.05);
    CHECK(hard_right.omega == doctest::Approx(-kPi / 6));
    auto soft_left = map_discrete_action(s, 3);
    CHECK(soft_left.omega == doctest::Approx(kPi / 12));
  }

  SUBCASE("disc3 keeps v=0.3 for all commands") {
    ActionSpace s = ActionSpace::disc3();
    REQUIRE(s.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(map_discrete_action(s, i).v == 0.3);
    CHECK(map_discrete_action(s, 0).omega == -0.3);
    CHECK(map_discrete_action(s, 1).omega == 0.0);
    CHECK(map_discrete_action(s, 2).omega == 0.3);
  }

  SUBCASE("disc21 follows -pi/6 + n*pi/60") {
    ActionSpace s = ActionSpace::disc21();
    REQUIRE(s.size() == 21);
    auto mid = map_discrete_action(s, 10);
    CHECK(mid.omega == doctest::Approx(0.0));
    CHECK(mid.v == 0.3);
    auto first = map_discrete_action(s, 0);
    CHECK(first.omega == doctest::Approx(-kPi / 6));
    CHECK(first.v == 0.05);
    auto last = map_discrete_action(s, 20);
    CHECK(last.omega == doctest::Approx(kPi / 6));
    CHECK(last.v == 0.05);
  }

  SUBCASE("index bounds are a contract violation") {
    ActionSpace s = ActionSpace::disc5();
    CHECK_THROWS_AS(map_discrete_action(s, -1), ContractError);
    CHECK_THROWS_AS(map_discrete_action(s, 5), ContractError);
  }

  SUBCASE("continuous mapping endpoints and midpoint") {
    auto mid = map_continuous_action({0.0, 0.0});
    CHECK(mid.v == doctest::Approx(0.175));
    CHECK(mid.omega == doctest::Approx(0.0));
    auto hi = map_continuous_action({3.0, 3.0});
    CHECK(hi.v == doctest::Approx(0.3));
    CHECK(hi.omega == doctest::Approx(kPi / 6));
    auto lo = map_continuous_action({-3.0, -3.0});
    CHECK(lo.v == doctest::Approx(0.05));
    CHECK(lo.omega == doctest::Approx(-kPi / 6));
    auto clipped = map_continuous_action({4.5, -10.0});
    CHECK(clipped.v == doctest::Approx(0.3));
    CHECK(clipped.omega == doctest::Approx(-kPi / 6));
  }

  SUBCASE("continuous mapping is in-box and monotone") {
    Rng rng(3);
    double prev_v = -1;
    for (int i = 0; i < 200; ++i) {
      const double z0 = rng.uniform(-6, 6);
      const double z1 = rng.uniform(-6, 6);
      auto c = map_continuous_action({z0, z1});
      CHECK(c.v >= 0.05);
      CHECK(c.v <= 0.3);
      CHECK(c.omega >= -kPi / 6 - 1e-12);
      CHECK(c.omega <= kPi / 6 + 1e-12);
      (void)prev_v;
    }
    for (double z = -3.5; z < 3.5; z += 0.25) {
      const double v = map_continuous_action({z, 0}).v;
      CHECK(v >= prev_v);
      prev_v = v;
    }
  }

  SUBCASE("unknown space name is a config error") {
    CHECK_THROWS_AS(ActionSpace::from_name("disc7"), ConfigError);
  }
}

TEST_CASE("reset fills the frame stack") {
  GridMap map = GridMap::parse(kRoomMap);

  SUBCASE("gray mode: 4 identical single-channel frames") {
    Env e(&map, ActionSpace::disc5(), ObservationSpec{}, EpisodeConfig{}, 1,
          nullptr);
    nn::Tensor s = e.reset(SpawnMode::kEvalAnchor);
    REQUIRE(s.shape() == std::vector<int>{84, 84, 4});
    for (std::int64_t p = 0; p < 84 * 84; ++p) {
      for (int f = 1; f < 4; ++f) {
        CHECK(s[p * 4 + f] == s[p * 4]);
      }
    }
  }

  SUBCASE("fused mode: 8 channels") {
    CountingPredictor model;
    Env e(&map, ActionSpace::disc5(), ObservationSpec{84, SensorMode::kFused},
          EpisodeConfig{}, 1, &model);
    nn::Tensor s = e.reset(SpawnMode::kEvalAnchor);
    CHECK(s.shape() == std::vector<int>{84, 84, 8});
  }
}

TEST_CASE("observation frame assembly per sensor mode") {
  GridMap map = GridMap::parse(kRoomMap);
  auto frame = sim::render_camera(map, sim::Pose{2.25, 1.25, 0.5}, 32);

  SUBCASE("gray is the camera frame exactly") {
    nn::Tensor f =
        build_observation_frame(SensorMode::kGray, frame.gray, frame.depth,
                                nullptr);
    REQUIRE(f.shape() == std::vector<int>{32, 32, 1});
    CHECK(std::memcmp(f.data(), frame.gray.data(),
                      static_cast<std::size_t>(f.numel()) * 4) == 0);
  }

  SUBCASE("depth mode passes ground truth and never calls the model") {
    CountingPredictor model;
    nn::Tensor f = build_observation_frame(SensorMode::kDepth, frame.gray,
                                           frame.depth, &model);
    CHECK(std::memcmp(f.data(), frame.depth.data(),
                      static_cast<std::size_t>(f.numel()) * 4) == 0);
    CHECK(model.calls == 0);
  }

  SUBCASE("fused concatenates gray with the model output") {
    CountingPredictor model;
    nn::Tensor f = build_observation_frame(SensorMode::kFused, frame.gray,
                                           frame.depth, &model);
    REQUIRE(f.shape() == std::vector<int>{32, 32, 2});
    CHECK(model.calls == 1);
    for (std::int64_t p = 0; p < 32 * 32; ++p) {
      CHECK(f[2 * p] == frame.gray[p]);
      CHECK(f[2 * p + 1] == doctest::Approx(1.0f - frame.gray[p]));
    }
  }

  SUBCASE("model-dependent modes without a model are config errors") {
    CHECK_THROWS_AS(build_observation_frame(SensorMode::kDepthPred,
                                            frame.gray, frame.depth, nullptr),
                    ConfigError);
    Env* e = nullptr;
    CHECK_THROWS_AS(
        e = new Env(&map, ActionSpace::disc5(),
                    ObservationSpec{84, SensorMode::kFused}, EpisodeConfig{},
                    1, nullptr),
        ConfigError);
    (void)e;
  }
}

TEST_CASE("episode lifecycle") {
  GridMap corridor = GridMap::parse(kCorridorMap);

  SUBCASE("forward into the wall collides at the predicted step") {
    Env e(&corridor, ActionSpace::disc5(), small_obs(SensorMode::kGray),
          EpisodeConfig{}, 1, nullptr);
    e.reset(SpawnMode::kEvalAnchor);
    // Anchor center (0.75, 0.75) facing +x; wall face at x = 3.0. Collision
    // once x > 2.82, i.e. after ceil((2.82 - 0.75)/0.06) = 35 steps.
    int steps = 0;
    StepResult r;
    while (true) {
      r = e.step(0);
      ++steps;
      if (r.done) break;
      CHECK(r.reward > 0.0);
    }
    CHECK(steps == 35);
    CHECK(r.reward == -1.0);
    CHECK(r.info.collided);
    CHECK(e.done());
  }

  SUBCASE("step after done is a contract violation") {
    Env e(&corridor, ActionSpace::disc5(), small_obs(SensorMode::kGray),
          EpisodeConfig{}, 1, nullptr);
    e.reset(SpawnMode::kEvalAnchor);
    while (!e.step(0).done) {
    }
    CHECK_THROWS_AS(e.step(0), ContractError);
  }

  SUBCASE("step before reset is a contract violation") {
    Env e(&corridor, ActionSpace::disc5(), small_obs(SensorMode::kGray),
          EpisodeConfig{}, 1, nullptr);
    CHECK_THROWS_AS(e.step(0), ContractError);
  }

  SUBCASE("surviving the horizon ends the episode with done") {
    GridMap room = GridMap::parse(kRoomMap);
    Env e(&room, ActionSpace::disc5(), small_obs(SensorMode::kGray),
          EpisodeConfig{}, 1, nullptr);
    e.reset(SpawnMode::kEvalAnchor);
    // Hard-right turns trace a ~0.1 m circle; the room is clear.
    StepResult r;
    int steps = 0;
    do {
      r = e.step(1);
      ++steps;
    } while (!r.done);
    CHECK(steps == 2000);
    CHECK(r.info.t == 2000);
    CHECK(!r.info.collided);
    CHECK(r.reward > 0.0);
  }

  SUBCASE("undiscounted return is bounded by (-1, 1.15*T]") {
    GridMap room = GridMap::parse(kRoomMap);
    EpisodeConfig ep;
    ep.horizon = 300;
    Env e(&room, ActionSpace::disc5(), small_obs(SensorMode::kGray), ep, 5,
          nullptr);
    Rng rng(17);
    for (int episode = 0; episode < 3; ++episode) {
      e.reset(SpawnMode::kRandom);
      double ret = 0;
      StepResult r;
      do {
        r = e.step(static_cast<int>(rng.range(5)));
        ret += r.reward;
      } while (!r.done);
      CHECK(ret <= 1.15 * ep.horizon);
      CHECK(ret >= -1.0);
    }
  }
}

TEST_CASE("frame stack shifts FIFO") {
  GridMap room = GridMap::parse(kRoomMap);
  Env e(&room, ActionSpace::disc5(), small_obs(SensorMode::kGray),
        EpisodeConfig{}, 1, nullptr);
  nn::Tensor s0 = e.reset(SpawnMode::kEvalAnchor);
  StepResult r1 = e.step(0);

  // Frames 0..2 of the new state equal the reset frame; frame 3 is the fresh
  // render at the advanced pose.
  auto direct = sim::render_camera(room, e.pose(), 32);
  for (std::int64_t p = 0; p < 32 * 32; ++p) {
    for (int f = 0; f < 3; ++f) {
      CHECK(r1.state[p * 4 + f] == s0[p * 4]);
    }
    CHECK(r1.state[p * 4 + 3] == direct.gray[p]);
  }

  StepResult r2 = e.step(0);
  for (std::int64_t p = 0; p < 32 * 32; ++p) {
    CHECK(r2.state[p * 4 + 2] == r1.state[p * 4 + 3]);
  }
}

TEST_CASE("determinism and state serialization") {
  GridMap room = GridMap::parse(kRoomMap);

  SUBCASE("fixed seed and actions give a bit-identical trace") {
    auto run = [&] {
      Env e(&room, ActionSpace::disc5(), small_obs(SensorMode::kGray),
            EpisodeConfig{}, 99, nullptr);
      e.reset(SpawnMode::kRandom);
      std::vector<float> trace;
      Rng act(5);
      for (int i = 0; i < 40; ++i) {
        StepResult r = e.step(static_cast<int>(act.range(5)));
        trace.insert(trace.end(), r.state.data(),
                     r.state.data() + r.state.numel());
        trace.push_back(static_cast<float>(r.reward));
        if (r.done) break;
      }
      return trace;
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * 4) == 0);
  }

  SUBCASE("eval anchor resets do not consume the rng stream") {
    Env a(&room, ActionSpace::disc5(), small_obs(SensorMode::kGray),
          EpisodeConfig{}, 123, nullptr);
    Env b(&room, ActionSpace::disc5(), small_obs(SensorMode::kGray),
          EpisodeConfig{}, 123, nullptr);
    b.reset(SpawnMode::kEvalAnchor);
    a.reset(SpawnMode::kRandom);
    b.reset(SpawnMode::kRandom);
    CHECK(a.pose().x == b.pose().x);
    CHECK(a.pose().y == b.pose().y);
    CHECK(a.pose().theta == b.pose().theta);
  }

  SUBCASE("serialize/deserialize resumes the identical trajectory") {
    Env e(&room, ActionSpace::disc5(), small_obs(SensorMode::kGray),
          EpisodeConfig{}, 7, nullptr);
    e.reset(SpawnMode::kRandom);
    for (int i = 0; i < 10; ++i) e.step(i % 5);

    io::Writer w;
    e.serialize(w);

    Env restored(&room, ActionSpace::disc5(), small_obs(SensorMode::kGray),
                 EpisodeConfig{}, 7777, nullptr);
    io::Reader r(w.data());
    restored.deserialize(r);

    for (int i = 0; i < 25; ++i) {
      StepResult ra = e.step(i % 5);
      StepResult rb = restored.step(i % 5);
      CHECK(ra.reward == rb.reward);
      CHECK(ra.done == rb.done);
      CHECK(std::memcmp(ra.state.data(), rb.state.data(),
                        static_cast<std::size_t>(ra.state.numel()) * 4) == 0);
      if (ra.done) break;
    }
  }
}

TEST_CASE("continuous control steps") {
  GridMap room = GridMap::parse(kRoomMap);
  Env e(&room, ActionSpace::continuous(), small_obs(SensorMode::kGray),
        EpisodeConfig{}, 11, nullptr);
  e.reset(SpawnMode::kEvalAnchor);
  StepResult r = e.step_continuous({0.0, 3.0});
  CHECK(r.info.v == doctest::Approx(0.175));
  CHECK(r.info.omega == doctest::Approx(kPi / 6));
  CHECK_THROWS_AS(e.step(0), ContractError);

  Env d(&room, ActionSpace::disc5(), small_obs(SensorMode::kGray),
        EpisodeConfig{}, 11, nullptr);
  d.reset(SpawnMode::kEvalAnchor);
  CHECK_THROWS_AS(d.step_continuous({0.0, 0.0}), ContractError);
}
