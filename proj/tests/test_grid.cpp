#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "undomap/grid.hpp"
#include "undomap/policy.hpp"
#include "undomap/rng.hpp"

using namespace undomap;

namespace {

ActionSampler always(Action a) {
  return [a](const GridState&, Rng&) { return a; };
}

ActionSampler uniform_random() {
  return [](const GridState&, Rng& rng) {
    const double p[4] = {0.25, 0.25, 0.25, 0.25};
    return static_cast<Action>(rng.categorical(p, 4));
  };
}

}  // namespace

TEST_SUITE("grid") {

TEST_CASE("step moves, blocks at walls, terminates at goal") {
  const GridWorldSpec spec;

  const StepResult right = step(spec, {0, 0}, Action::Right);
  CHECK(right.state == GridState{1, 0});
  CHECK(right.reward == -1.0);
  CHECK_FALSE(right.done);

  const StepResult wall = step(spec, {0, 0}, Action::Left);
  CHECK(wall.state == GridState{0, 0});
  CHECK(wall.reward == -1.0);
  CHECK_FALSE(wall.done);

  const StepResult goal = step(spec, {7, 6}, Action::Down);
  CHECK(goal.state == GridState{7, 7});
  CHECK(goal.reward == -1.0);
  CHECK(goal.done);

  CHECK_THROWS_AS(step(spec, {0.5, 0}, Action::Right), std::invalid_argument);
}

TEST_CASE("transforms map states as pinned") {
  const GridState a = apply_transform(StateTransform::identity(), {3, 4});
  CHECK(a == GridState{3, 4});

  const auto rot =
      StateTransform::rotation(std::numbers::pi / 2, {3.5, 3.5});
  const GridState b = apply_transform(rot, {0, 0});
  CHECK(b.x == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(b.y == doctest::Approx(0.0).epsilon(1e-12));

  const auto rot45 =
      StateTransform::rotation(std::numbers::pi / 4, {3.5, 3.5});
  const GridState c = apply_transform(rot45, {3.5, 3.5});
  CHECK(c.x == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(c.y == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("invert_transform round-trips every cell") {
  CHECK(invert_transform(StateTransform::identity()).kind ==
        TransformKind::Identity);

  const auto rot = StateTransform::rotation(std::numbers::pi / 2, {3.5, 3.5});
  const auto inv = invert_transform(rot);
  CHECK(inv.kind == TransformKind::Rotation);
  CHECK(inv.angle == doctest::Approx(-std::numbers::pi / 2));

  const auto rot3 = StateTransform::rotation(std::numbers::pi / 3, {3.5, 3.5});
  const auto inv3 = invert_transform(rot3);
  double max_err = 0.0;
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      const GridState p{double(x), double(y)};
      const GridState q = apply_transform(inv3, apply_transform(rot3, p));
      max_err = std::max(max_err, std::abs(q.x - p.x));
      max_err = std::max(max_err, std::abs(q.y - p.y));
    }
  CHECK(max_err < 1e-9);
}

TEST_CASE("always-Right rollout walks the bottom row then pins at the wall") {
  const GridWorldSpec spec;
  const Trajectory traj =
      rollout(spec, StateTransform::identity(), always(Action::Right), 1);
  CHECK(traj.length() == spec.horizon);
  CHECK(int(traj.states.size()) == spec.horizon + 1);
  for (int i = 0; i <= 7; ++i) CHECK(traj.states[i] == GridState{double(i), 0});
  for (int i = 8; i <= spec.horizon; ++i)
    CHECK(traj.states[i] == GridState{7, 0});
  CHECK_FALSE(reached_goal(spec, StateTransform::identity(), traj));
}

TEST_CASE("edge expert reaches the goal in 14 steps") {
  const GridWorldSpec spec;
  const Trajectory traj =
      rollout(spec, StateTransform::identity(), edge_expert(spec), 3);
  CHECK(traj.length() == 14);
  CHECK(traj.total_return() == -14.0);
  CHECK(reached_goal(spec, StateTransform::identity(), traj));
}

TEST_CASE("episodes never exceed the horizon") {
  const GridWorldSpec spec;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Trajectory traj =
        rollout(spec, StateTransform::identity(), uniform_random(), seed);
    CHECK(traj.length() <= 50);
    CHECK(traj.rewards.size() <= 50);
    CHECK(traj.states.size() == traj.actions.size() + 1);
    CHECK(traj.rewards.size() == traj.actions.size());
  }
}

TEST_CASE("rollouts are bit-identical across repeat runs") {
  const GridWorldSpec spec;
  const auto rot = StateTransform::rotation(std::numbers::pi / 2, {3.5, 3.5});
  for (std::uint64_t seed : {0ull, 7ull, 123456789ull}) {
    const Trajectory a = rollout(spec, rot, uniform_random(), seed);
    const Trajectory b = rollout(spec, rot, uniform_random(), seed);
    REQUIRE(a.states.size() == b.states.size());
    for (size_t i = 0; i < a.states.size(); ++i)
      CHECK(a.states[i] == b.states[i]);
    CHECK(a.actions == b.actions);
    CHECK(a.rewards == b.rewards);
  }
}

TEST_CASE("internal states stay inside the grid under a transform") {
  const GridWorldSpec spec;
  const auto rot = StateTransform::rotation(std::numbers::pi / 3, {3.5, 3.5});
  const auto inv = invert_transform(rot);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Trajectory traj = rollout(spec, rot, uniform_random(), seed);
    for (const GridState& obs : traj.states) {
      const GridState s = apply_transform(inv, obs);
      CHECK(s.x > -1e-9);
      CHECK(s.x < 7 + 1e-9);
      CHECK(s.y > -1e-9);
      CHECK(s.y < 7 + 1e-9);
    }
  }
}

TEST_CASE("composing with the inverse transform replays the source rollout") {
  // Rolling out pi composed with T^-1 in the transformed domain, then mapping
  // the observed states back through T^-1, reproduces the source rollout of
  // pi step for step at the same seed.
  const GridWorldSpec spec;
  const auto rot = StateTransform::rotation(std::numbers::pi / 2, {3.5, 3.5});
  const auto inv = invert_transform(rot);
  Rng init(derive_seed(5, "policy"));
  const Policy pol = Policy::random(spec, init);

  const ActionSampler composed = [&](const GridState& obs, Rng& rng) {
    return pol.sample(apply_transform(inv, obs), rng);
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Trajectory src =
        rollout(spec, StateTransform::identity(), pol.sampler(), seed);
    const Trajectory tgt = rollout(spec, rot, composed, seed);
    REQUIRE(src.states.size() == tgt.states.size());
    CHECK(src.actions == tgt.actions);
    for (size_t i = 0; i < src.states.size(); ++i) {
      const GridState undone = apply_transform(inv, tgt.states[i]);
      CHECK(undone.x == doctest::Approx(src.states[i].x).epsilon(1e-12));
      CHECK(undone.y == doctest::Approx(src.states[i].y).epsilon(1e-12));
    }
  }
}

TEST_CASE("goal-reaching returns count the steps taken") {
  const GridWorldSpec spec;
  Rng init(derive_seed(8, "policy"));
  const Policy pol = Policy::random(spec, init);
  int reached = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Trajectory traj =
        rollout(spec, StateTransform::identity(), pol.sampler(), seed);
    if (reached_goal(spec, StateTransform::identity(), traj)) {
      ++reached;
      CHECK(traj.total_return() == -double(traj.length()));
      CHECK(traj.length() >= 14);
    }
  }
  INFO("goal-reaching episodes seen: ", reached);
}

TEST_CASE("normalize_state maps the grid onto [-1, 1]") {
  const GridWorldSpec spec;
  CHECK(normalize_state(spec, {0, 0}) == GridState{-1, -1});
  CHECK(normalize_state(spec, {7, 7}) == GridState{1, 1});
  CHECK(normalize_state(spec, {3.5, 0}) == GridState{0, -1});

  GridWorldSpec line;
  line.height = 1;
  line.width = 2;
  line.goal = {1, 0};
  CHECK(normalize_state(line, {0, 0}).y == -1.0);
}

TEST_CASE("spec validation rejects unusable geometry") {
  GridWorldSpec bad;
  bad.width = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  GridWorldSpec oob;
  oob.goal = {9, 9};
  CHECK_THROWS_AS(oob.validate(), std::invalid_argument);
  GridWorldSpec ok;
  CHECK_NOTHROW(ok.validate());
}

}  // TEST_SUITE
