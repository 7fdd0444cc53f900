#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "undomap/divergences.hpp"
#include "undomap/grid.hpp"
#include "undomap/metrics.hpp"
#include "undomap/nn.hpp"
#include "undomap/policy.hpp"

namespace undomap {

enum class UndoFamily { Linear, Affine, Mlp };

const char* undo_family_name(UndoFamily family);
UndoFamily undo_family_from_name(const std::string& name);

/// Parametric map from target-domain states back to source coordinates.
/// Linear: 2x2 matrix applied about the grid center (4 params, row-major).
/// Affine: the same plus a translation (6 params).
/// Mlp: residual net, u(s) = s + net((s - center)/scale).
struct UndoMap {
  UndoFamily family = UndoFamily::Linear;
  GridState center{0.0, 0.0};
  std::vector<double> lin;  // Linear/Affine parameters
  Mlp net;                  // Mlp family
  double net_scale = 1.0;

  static UndoMap identity_linear(GridState center);
  static UndoMap identity_affine(GridState center);
  static UndoMap residual_mlp(GridState center, const std::vector<int>& hidden,
                              Rng& rng);

  std::vector<double>& parameters();
  const std::vector<double>& parameters() const;
  int param_count() const;

  GridState apply(const GridState& s) const;
  /// Usable as a StateMap without capturing a dangling reference.
  StateMap fn() const;

  /// d apply / d parameters, 2 x param_count row-major (x row then y row).
  std::vector<double> param_jacobian(const GridState& s) const;
  /// d apply / d input, row-major 2x2.
  std::array<double, 4> input_jacobian(const GridState& s) const;
};

struct TvDConfig {
  DivergenceSpec divergence;
  UndoFamily family = UndoFamily::Linear;
  bool freeze_policy = true;
  int outer_iterations = 500;
  double outer_lr = 6e-3;   // undo-map step size
  double policy_lr = 1e-2;  // policy step size (freeze_policy = false)
  int rollout_batch = 16;   // episodes collected per outer iteration
  double lambda = 0.0;      // target-reward augmentation weight
  std::uint64_t seed = 0;
  int eval_episodes = 16;       // held-out batches for the logged estimate
  int error_sample_size = 1000; // states for the undo-map error
  int checkpoint_every = 50;
  double grad_clip = 10.0;
  std::vector<int> undo_hidden = {32, 32};  // Mlp family only
};

struct TvdProblem {
  GridWorldSpec spec;        // source-domain geometry and dynamics
  StateTransform transform;  // target-domain observation map
};

struct TvDState {
  UndoMap undo;
  Policy policy;
  DualPotentials potentials;
  int iteration = 0;
  std::vector<MetricRow> history;
};

/// Target-domain episodes of the composed policy a ~ pi(.|u(s)), paired with
/// their images under u (states mapped, actions and rewards copied).
struct TargetBatch {
  std::vector<Trajectory> observed;
  std::vector<Trajectory> undone;
};

TargetBatch undone_rollout_batch(const TvdProblem& prob, const UndoMap& undo,
                                 const Policy& pol, std::uint64_t master_seed,
                                 int episodes);

/// Gradient (for descent) of the estimated transfer objective
///   mean_1 h + mean_2 g(u(.)) - alpha mean (h + g - c)+ - lambda E[R_T]
/// with respect to the policy parameters: the potential values act as
/// trajectory weights on the score function sum_t grad log pi(a_t | u(s_t)).
std::vector<double> grad_theta(const std::vector<Trajectory>& batch_source,
                               const TargetBatch& batch_target,
                               const UndoMap& undo, const Policy& pol,
                               const DualPotentials& pot,
                               const DivergenceSpec& div,
                               const Featurizer& feat, double lambda);

/// Gradient (for descent) of the same objective with respect to the undo-map
/// parameters: a score term (the policy sees u(s)), the pathwise potential
/// term through the featurizer, and the hinge term whose cost part chains the
/// dtw subgradient through u.
std::vector<double> grad_omega(const std::vector<Trajectory>& batch_source,
                               const TargetBatch& batch_target,
                               const UndoMap& undo, const Policy& pol,
                               const DualPotentials& pot,
                               const DivergenceSpec& div,
                               const Featurizer& feat, double lambda);

struct FDivGradients {
  std::vector<double> theta;
  std::vector<double> omega;
};

/// Descent gradients of the variational f-divergence objective: only the
/// second expectation depends on (theta, omega), giving
///   grad_theta = -E[f*(F) S_theta],  grad_omega = -E[f*(F) S_omega + f*'(F) grad_omega F].
FDivGradients grad_f_div(const TargetBatch& batch_target, const UndoMap& undo,
                         const Policy& pol, const Mlp& g_net,
                         DivergenceKind kind, const Featurizer& feat);

using CheckpointHook = std::function<void(const TvDState&)>;

/// The alternating min-max driver.  Per iteration: collect source samples and
/// composed-policy target rollouts, train the potentials for inner_steps, take
/// one clipped gradient step on omega (and theta unless frozen), log metrics.
/// freeze_policy = true requires source_policy; false requires demos.
/// resume_from restarts mid-run; seeds are derived per iteration so a resumed
/// run replays identically.  hook (optional) fires every checkpoint_every
/// iterations and at the end.
TvDState run_tvd(const TvdProblem& prob, const TvDConfig& cfg,
                 const Policy* source_policy, const DemoSet* demos,
                 const TvDState* resume_from = nullptr,
                 const CheckpointHook& hook = nullptr);

}  // namespace undomap
