#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "undomap/grid.hpp"
#include "undomap/nn.hpp"
#include "undomap/rng.hpp"

namespace undomap {

/// Softmax policy over the four grid actions.  The net consumes coordinates
/// normalized by the stored grid geometry, so the policy accepts any real
/// state (needed when it is composed with a learned state map).
struct Policy {
  GridWorldSpec grid;
  Mlp net;  // 2 inputs -> hidden -> 4 logits

  static Policy random(const GridWorldSpec& grid, Rng& rng,
                       const std::vector<int>& hidden = {32, 32});

  std::array<double, kNumActions> action_distribution(const GridState& s) const;
  double entropy(const GridState& s) const;
  Action sample(const GridState& s, Rng& rng) const;

  /// Sampler for the rollout engine; pure, safe to share across threads.
  ActionSampler sampler() const;

  struct LogProbGrad {
    std::vector<double> theta;  // d log pi(a|s) / d params
    Vec2 state;                 // d log pi(a|s) / d (raw grid coordinates)
  };
  LogProbGrad log_prob_grad(const GridState& s, Action a) const;

  /// Cotangent of the entropy w.r.t. the logits, for analytic entropy-bonus
  /// gradients: dH/dz_k = -pi_k (log pi_k + H).
  std::array<double, kNumActions> entropy_logit_grad(const GridState& s) const;
};

enum class SourceRegime {
  LowEntropyOptimal,
  HighEntropyOptimal,
  HighEntropySuboptimal,
};

const char* regime_name(SourceRegime regime);
SourceRegime regime_from_name(const std::string& name);

struct PolicyEval {
  double goal_rate = 0.0;
  double mean_return = 0.0;
  double mean_entropy = 0.0;  // nats per step, over visited states
};

/// Optional map applied to observed states before the policy sees them.
using StateMap = std::function<GridState(const GridState&)>;

/// Monte-Carlo statistics of (optionally composed) policy rollouts.
PolicyEval evaluate_policy(const GridWorldSpec& spec,
                           const StateTransform& transform, const Policy& pol,
                           const StateMap& undo, int episodes,
                           std::uint64_t seed);

struct TrainSourceOptions {
  int iterations = 600;
  int batch_episodes = 32;
  double lr = 0.01;
  double beta_start = 0.05;  // entropy bonus, linearly annealed
  double beta_end = 0.05;
  int eval_episodes = 200;
  std::vector<int> hidden = {32, 32};
};

TrainSourceOptions default_train_options(SourceRegime regime);

/// True when the evaluation satisfies the regime's behavior gates.
bool regime_gates_pass(SourceRegime regime, const PolicyEval& eval);
std::string regime_gates_text(SourceRegime regime);

struct TrainedSource {
  Policy policy;
  PolicyEval eval;        // the gate-checking evaluation
  int iterations_run = 0;
};

/// Entropy-regularized episodic policy gradient (return baseline, entropy
/// bonus beta) driven to one of the three behavior regimes.  Throws
/// std::runtime_error with a diagnostic when the gates fail after the budget.
TrainedSource train_source(const GridWorldSpec& spec, SourceRegime regime,
                           std::uint64_t seed, const TrainSourceOptions& opt);
TrainedSource train_source(const GridWorldSpec& spec, SourceRegime regime,
                           std::uint64_t seed);

struct DemoSet {
  std::vector<Trajectory> trajectories;

  /// Rejects empty sets and out-of-bounds states.
  void validate(const GridWorldSpec& spec) const;
};

/// Deterministic expert that walks the grid edges: along x toward the goal
/// column, then along y.  Shortest-path behavior on the default grid.
ActionSampler edge_expert(const GridWorldSpec& spec);

}  // namespace undomap
