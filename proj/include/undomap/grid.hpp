#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "undomap/rng.hpp"

namespace undomap {

using Vec2 = std::array<double, 2>;

/// A position in grid coordinates.  Source-domain states are integer lattice
/// points; transformed (target-domain) states are real-valued images of them.
struct GridState {
  double x = 0.0;
  double y = 0.0;
};

inline bool operator==(const GridState& a, const GridState& b) {
  return a.x == b.x && a.y == b.y;
}

enum class Action : int { Left = 0, Right = 1, Up = 2, Down = 3 };
inline constexpr int kNumActions = 4;

const char* action_name(Action a);
Action action_from_name(const std::string& name);

/// One episode: L+1 states, L actions, L rewards.
struct Trajectory {
  std::vector<GridState> states;
  std::vector<Action> actions;
  std::vector<double> rewards;

  int length() const { return static_cast<int>(actions.size()); }
  double total_return() const {
    double r = 0.0;
    for (double v : rewards) r += v;
    return r;
  }
};

struct GridWorldSpec {
  int width = 8;
  int height = 8;
  GridState start{0.0, 0.0};
  GridState goal{7.0, 7.0};
  int horizon = 50;
  double step_reward = -1.0;

  GridState center() const {
    return {0.5 * (width - 1), 0.5 * (height - 1)};
  }
  /// Throws std::invalid_argument when dimensions or start/goal are unusable.
  void validate() const;
};

enum class TransformKind { Identity, Rotation };

/// Invertible map applied to the source state space to define a target domain.
struct StateTransform {
  TransformKind kind = TransformKind::Identity;
  double angle = 0.0;       // radians, Rotation only
  GridState center{0, 0};   // Rotation only

  static StateTransform identity() { return {}; }
  static StateTransform rotation(double angle, GridState center) {
    return {TransformKind::Rotation, angle, center};
  }
};

GridState apply_transform(const StateTransform& t, const GridState& s);
StateTransform invert_transform(const StateTransform& t);

struct StepResult {
  GridState state;
  double reward = 0.0;
  bool done = false;
};

/// Deterministic dynamics on the integer lattice.  Moves one cell in the
/// chosen direction, or stays put on a wall hit.  Rejects non-integer states.
StepResult step(const GridWorldSpec& spec, const GridState& s, Action a);

/// Maps grid coordinates to [-1, 1] per axis (a degenerate axis maps to -1).
GridState normalize_state(const GridWorldSpec& spec, const GridState& s);

/// Action sampler seen by the rollout engine.  `observed` is the state after
/// the domain transform; deterministic samplers may ignore the rng.
using ActionSampler = std::function<Action(const GridState& observed, Rng& rng)>;

/// Rolls one episode.  The engine holds the true integer state internally and
/// exposes only transformed states to the sampler and in the trajectory.
/// Identical (spec, transform, sampler, seed) give bit-identical results.
Trajectory rollout(const GridWorldSpec& spec, const StateTransform& transform,
                   const ActionSampler& act, std::uint64_t rng_seed);

/// True when the episode ended on the goal cell (final state equals the
/// transformed goal within 1e-9 per axis).
bool reached_goal(const GridWorldSpec& spec, const StateTransform& transform,
                  const Trajectory& traj);

}  // namespace undomap
