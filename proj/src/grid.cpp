#include "undomap/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace undomap {

const char* action_name(Action a) {
  switch (a) {
    case Action::Left: return "L";
    case Action::Right: return "R";
    case Action::Up: return "U";
    case Action::Down: return "D";
  }
  return "?";
}

Action action_from_name(const std::string& name) {
  if (name == "L") return Action::Left;
  if (name == "R") return Action::Right;
  if (name == "U") return Action::Up;
  if (name == "D") return Action::Down;
  throw std::invalid_argument("unknown action name: " + name);
}

namespace {

bool is_integer(double v) { return v == std::floor(v); }

bool on_lattice(const GridWorldSpec& spec, const GridState& s) {
  return is_integer(s.x) && is_integer(s.y) && s.x >= 0 && s.x < spec.width &&
         s.y >= 0 && s.y < spec.height;
}

}  // namespace

void GridWorldSpec::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("grid dimensions must be positive");
  if (horizon <= 0) throw std::invalid_argument("horizon must be positive");
  if (start == goal) throw std::invalid_argument("start must differ from goal");
  if (!on_lattice(*this, start)) throw std::invalid_argument("start must be a cell on the grid");
  if (!on_lattice(*this, goal)) throw std::invalid_argument("goal must be a cell on the grid");
}

namespace {

// Rotation entries snapped so that multiples of pi/2 are exactly {0, +-1}.
double snap(double v) {
  if (std::abs(v) < 1e-12) return 0.0;
  if (std::abs(v - 1.0) < 1e-12) return 1.0;
  if (std::abs(v + 1.0) < 1e-12) return -1.0;
  return v;
}

}  // namespace

GridState apply_transform(const StateTransform& t, const GridState& s) {
  switch (t.kind) {
    case TransformKind::Identity:
      return s;
    case TransformKind::Rotation: {
      const double c = snap(std::cos(t.angle));
      const double sn = snap(std::sin(t.angle));
      const double dx = s.x - t.center.x;
      const double dy = s.y - t.center.y;
      return {t.center.x + c * dx - sn * dy, t.center.y + sn * dx + c * dy};
    }
  }
  throw std::logic_error("unreachable transform kind");
}

StateTransform invert_transform(const StateTransform& t) {
  switch (t.kind) {
    case TransformKind::Identity:
      return t;
    case TransformKind::Rotation:
      return StateTransform::rotation(-t.angle, t.center);
  }
  throw std::logic_error("unreachable transform kind");
}

StepResult step(const GridWorldSpec& spec, const GridState& s, Action a) {
  if (!is_integer(s.x) || !is_integer(s.y))
    throw std::invalid_argument("step() requires integer source-domain states");
  if (s.x < 0 || s.x >= spec.width || s.y < 0 || s.y >= spec.height)
    throw std::invalid_argument("step() state outside the grid");

  double nx = s.x;
  double ny = s.y;
  switch (a) {
    case Action::Left: nx -= 1; break;
    case Action::Right: nx += 1; break;
    case Action::Up: ny -= 1; break;
    case Action::Down: ny += 1; break;
  }
  // Wall hit: the agent remains where it was.
  if (nx < 0 || nx >= spec.width || ny < 0 || ny >= spec.height) {
    nx = s.x;
    ny = s.y;
  }
  const GridState next{nx, ny};
  return {next, spec.step_reward, next == spec.goal};
}

GridState normalize_state(const GridWorldSpec& spec, const GridState& s) {
  const double dx = std::max(spec.width - 1, 1);
  const double dy = std::max(spec.height - 1, 1);
  return {2.0 * s.x / dx - 1.0, 2.0 * s.y / dy - 1.0};
}

Trajectory rollout(const GridWorldSpec& spec, const StateTransform& transform,
                   const ActionSampler& act, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  Trajectory traj;
  GridState true_state = spec.start;
  traj.states.push_back(apply_transform(transform, true_state));
  for (int t = 0; t < spec.horizon; ++t) {
    const GridState observed = apply_transform(transform, true_state);
    const Action a = act(observed, rng);
    const StepResult r = step(spec, true_state, a);
    true_state = r.state;
    traj.states.push_back(apply_transform(transform, true_state));
    traj.actions.push_back(a);
    traj.rewards.push_back(r.reward);
    if (r.done) break;
  }
  return traj;
}

bool reached_goal(const GridWorldSpec& spec, const StateTransform& transform,
                  const Trajectory& traj) {
  if (traj.states.empty()) return false;
  const GridState goal = apply_transform(transform, spec.goal);
  const GridState& last = traj.states.back();
  return std::abs(last.x - goal.x) <= 1e-9 && std::abs(last.y - goal.y) <= 1e-9;
}

}  // namespace undomap
