#pragma once

#include <span>
#include <string>
#include <vector>

#include "undomap/costs.hpp"
#include "undomap/grid.hpp"
#include "undomap/nn.hpp"
#include "undomap/rng.hpp"

namespace undomap {

enum class DivergenceKind { Wasserstein, Chi2, TV, KL };

const char* divergence_name(DivergenceKind kind);
DivergenceKind divergence_from_name(const std::string& name);

struct DivergenceSpec {
  DivergenceKind kind = DivergenceKind::Wasserstein;
  double alpha = 10.0;  // hinge weight (Wasserstein only)
  CostSpec cost;        // ground cost (Wasserstein only)
  double potential_lr = 1e-3;
  int inner_steps = 50;
  int batch_size = 32;
  std::vector<int> potential_hidden = {64, 64};
};

/// Fixed-size encoding of samples for the potential nets.
/// TrajectoryDTW mode: the first L states (the terminal state is dropped, so
/// a length-L episode contributes L states), padded to the horizon by
/// repeating the last one, as normalized coordinates, plus L/horizon;
/// dimension 2*horizon + 1.  StateL2 mode: the normalized 2-vector.
struct Featurizer {
  CostMode mode = CostMode::TrajectoryDTW;
  GridWorldSpec grid;

  int dim() const;
  std::vector<double> features(const Trajectory& traj) const;
  std::vector<double> features(const GridState& s) const;

  /// Chain rule helper: adds d(cot . features)/d(raw state coordinates) into
  /// out, one entry per trajectory state (terminal entry stays zero).
  void add_state_grad(const Trajectory& traj, std::span<const double> cot,
                      std::vector<Vec2>& out) const;
  Vec2 state_grad(std::span<const double> cot) const;
};

/// Trainable test functions h and g of the dual objective.
struct DualPotentials {
  Mlp h, g;

  static DualPotentials random(int feature_dim, const std::vector<int>& hidden,
                               Rng& rng);
};

/// Sets the output bias of a scalar net; used to start potentials at the
/// ground-cost scale so the hinge is active from the first update.
void set_output_bias(Mlp& net, double value);
void warm_start(DualPotentials& pot, double mean_cost);

/// A set of samples the divergence machinery can draw minibatches from.
/// seqs carries the cost-side view (full state sequences; single states are
/// length-1 sequences).  weights empty means uniform; otherwise entries are
/// sampled (and averaged) with these probabilities, which lets a pool
/// represent an exact discrete distribution rather than an empirical draw.
struct SamplePool {
  std::vector<std::vector<double>> feats;
  std::vector<std::vector<GridState>> seqs;
  std::vector<double> weights;

  int size() const { return static_cast<int>(feats.size()); }
};

SamplePool make_trajectory_pool(const std::vector<Trajectory>& trajs,
                                const Featurizer& feat);
SamplePool make_state_pool(const std::vector<GridState>& states,
                           const Featurizer& feat);

struct DivergenceEstimate {
  double value = 0.0;
  double hinge_violation_rate = 0.0;  // fraction of pairs with active hinge
};

/// Eq-style soft-constrained dual objective:
///   mean_1 h + mean_2 g - alpha * mean_pairs (h + g - c)+
/// over the full cross product of the two batches; cost is n1 x n2 row-major.
/// Present weights turn the means into exact weighted expectations.
DivergenceEstimate wasserstein_objective(
    const std::vector<std::vector<double>>& feats1,
    const std::vector<std::vector<double>>& feats2,
    const std::vector<double>& cost, const DualPotentials& pot, double alpha,
    std::span<const double> weights1 = {},
    std::span<const double> weights2 = {});

struct PotentialTrainStats {
  int steps = 0;
  double last_objective = 0.0;
  double last_hinge_rate = 0.0;
};

/// inner_steps rounds of stochastic gradient ascent on both potentials:
///   xi += lr * [grad mean F  -  alpha * grad mean (h + g - c)+]
/// with batch_size samples drawn from each pool per round.  pool_cost is the
/// precomputed p1.size x p2.size ground-cost matrix.  Throws when parameters
/// leave the finite range.
PotentialTrainStats update_potentials(const SamplePool& p1,
                                      const SamplePool& p2,
                                      const std::vector<double>& pool_cost,
                                      DualPotentials& pot,
                                      const DivergenceSpec& spec, Rng& rng);

/// Convex conjugate f* used by the variational f-divergence objective, its
/// derivative, and the potential clamp (TV restricts g to [-1/2, 1/2]; the
/// KL exponential is clamped at e^20).
double f_conjugate(DivergenceKind kind, double y);
double f_conjugate_prime(DivergenceKind kind, double y);
double clamp_potential(DivergenceKind kind, double y);

/// mean_1 g - mean_2 f*(g), with the TV clamp applied on both sides.
double f_div_objective(const std::vector<std::vector<double>>& feats1,
                       const std::vector<std::vector<double>>& feats2,
                       const Mlp& g_net, DivergenceKind kind,
                       std::span<const double> weights1 = {},
                       std::span<const double> weights2 = {});

/// One ascent step xi += eta * [grad mean F(x1) - grad mean f*(F(x2))] using
/// the per-kind conjugate derivative (chi2: 1 + F/2; TV: 1; KL: e^F).
void update_f_potential(const std::vector<std::vector<double>>& feats1,
                        const std::vector<std::vector<double>>& feats2,
                        Mlp& g_net, DivergenceKind kind, double eta);

/// inner_steps resampled rounds of update_f_potential.
PotentialTrainStats train_f_potential(const SamplePool& p1,
                                      const SamplePool& p2, Mlp& g_net,
                                      const DivergenceSpec& spec, Rng& rng);

/// Estimate adjusted for reporting: the KL variational form used here peaks
/// at KL - 1, so reports add the 1 back; other kinds pass through.
double divergence_report_value(DivergenceKind kind, double raw);

/// batch_size indices drawn from the pool (weighted when weights are set).
std::vector<int> sample_pool_indices(const SamplePool& pool, int batch_size,
                                     Rng& rng);

}  // namespace undomap
