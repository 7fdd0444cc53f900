#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "undomap/costs.hpp"
#include "undomap/grid.hpp"
#include "undomap/nn.hpp"

// Data-parallel kernels for the hot loops: batched rollouts, pairwise
// trajectory costs, batched potential evaluation, and weighted parameter
// gradients.  Each kernel is OpenMP-parallel and bitwise-identical to its
// serial counterpart in batch_ops::reference, independent of thread count:
// outputs use disjoint slots and reductions run over fixed-size chunks that
// are combined in index order.
namespace undomap::batch_ops {

// Chunk width for deterministic gradient reductions.
inline constexpr int kGradChunk = 8;

/// n seeded episodes; episode k uses derive_seed(master_seed, stream, k).
std::vector<Trajectory> rollout_batch(const GridWorldSpec& spec,
                                      const StateTransform& transform,
                                      const ActionSampler& act,
                                      std::uint64_t master_seed,
                                      std::string_view stream, int n);

/// Row-major n1 x n2 matrix of dtw distances between state sequences.
/// Single-state sequences make this the plain state-to-state cost.
std::vector<double> pairwise_costs(
    const std::vector<std::vector<GridState>>& seqs1,
    const std::vector<std::vector<GridState>>& seqs2);

/// Scalar-output net applied to every input row.
std::vector<double> forward_scalar_batch(
    const Mlp& net, const std::vector<std::vector<double>>& inputs);

/// sum_i weights[i] * d net(inputs[i]) / d params for a scalar-output net.
std::vector<double> weighted_param_grad(
    const Mlp& net, const std::vector<std::vector<double>>& inputs,
    const std::vector<double>& weights);

/// For each j: sum_i weights[i*n2+j] * dtw_subgradient(seqs1[i], seqs2[j]).
/// Entries with zero weight are skipped, so only hinge-active pairs pay for
/// an alignment.
std::vector<std::vector<Vec2>> weighted_cost_subgrad(
    const std::vector<std::vector<GridState>>& seqs1,
    const std::vector<std::vector<GridState>>& seqs2,
    const std::vector<double>& weights);

// Serial implementations of the kernels above, kept as the comparison
// baseline for tests and the kernel benchmark.
namespace reference {

std::vector<Trajectory> rollout_batch(const GridWorldSpec& spec,
                                      const StateTransform& transform,
                                      const ActionSampler& act,
                                      std::uint64_t master_seed,
                                      std::string_view stream, int n);

std::vector<double> pairwise_costs(
    const std::vector<std::vector<GridState>>& seqs1,
    const std::vector<std::vector<GridState>>& seqs2);

std::vector<double> forward_scalar_batch(
    const Mlp& net, const std::vector<std::vector<double>>& inputs);

std::vector<double> weighted_param_grad(
    const Mlp& net, const std::vector<std::vector<double>>& inputs,
    const std::vector<double>& weights);

std::vector<std::vector<Vec2>> weighted_cost_subgrad(
    const std::vector<std::vector<GridState>>& seqs1,
    const std::vector<std::vector<GridState>>& seqs2,
    const std::vector<double>& weights);

}  // namespace reference

}  // namespace undomap::batch_ops
