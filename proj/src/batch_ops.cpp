#include "undomap/batch_ops.hpp"

#include <algorithm>
#include <stdexcept>

#include "undomap/rng.hpp"

namespace undomap::batch_ops {

namespace {

void check_weights(size_t expected, const std::vector<double>& weights) {
  if (weights.size() != expected) {
    throw std::invalid_argument("batch_ops: weight matrix size mismatch");
  }
}

}  // namespace

std::vector<Trajectory> rollout_batch(const GridWorldSpec& spec,
                                      const StateTransform& transform,
                                      const ActionSampler& act,
                                      std::uint64_t master_seed,
                                      std::string_view stream, int n) {
  std::vector<Trajectory> out(n);
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < n; ++k) {
    out[k] = rollout(spec, transform, act, derive_seed(master_seed, stream, k));
  }
  return out;
}

std::vector<double> pairwise_costs(
    const std::vector<std::vector<GridState>>& seqs1,
    const std::vector<std::vector<GridState>>& seqs2) {
  const int n1 = static_cast<int>(seqs1.size());
  const int n2 = static_cast<int>(seqs2.size());
  std::vector<double> out(static_cast<size_t>(n1) * n2);
#pragma omp parallel for schedule(dynamic)
  for (int idx = 0; idx < n1 * n2; ++idx) {
    out[idx] = dtw(seqs1[idx / n2], seqs2[idx % n2]).distance;
  }
  return out;
}

std::vector<double> forward_scalar_batch(
    const Mlp& net, const std::vector<std::vector<double>>& inputs) {
  const int n = static_cast<int>(inputs.size());
  std::vector<double> out(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    out[i] = net.forward_scalar(inputs[i]);
  }
  return out;
}

std::vector<double> weighted_param_grad(
    const Mlp& net, const std::vector<std::vector<double>>& inputs,
    const std::vector<double>& weights) {
  check_weights(inputs.size(), weights);
  const int n = static_cast<int>(inputs.size());
  const int chunks = (n + kGradChunk - 1) / kGradChunk;
  const size_t P = static_cast<size_t>(net.param_count());
  std::vector<std::vector<double>> partial(chunks);
#pragma omp parallel for schedule(dynamic)
  for (int c = 0; c < chunks; ++c) {
    std::vector<double> acc(P, 0.0);
    const int hi = std::min(n, (c + 1) * kGradChunk);
    const double cot = 1.0;
    for (int i = c * kGradChunk; i < hi; ++i) {
      if (weights[i] == 0.0) continue;
      const auto back = net.backward(inputs[i], std::span(&cot, 1));
      for (size_t p = 0; p < P; ++p) acc[p] += weights[i] * back.param_grad[p];
    }
    partial[c] = std::move(acc);
  }
  std::vector<double> total(P, 0.0);
  for (int c = 0; c < chunks; ++c) {
    for (size_t p = 0; p < P; ++p) total[p] += partial[c][p];
  }
  return total;
}

std::vector<std::vector<Vec2>> weighted_cost_subgrad(
    const std::vector<std::vector<GridState>>& seqs1,
    const std::vector<std::vector<GridState>>& seqs2,
    const std::vector<double>& weights) {
  const int n1 = static_cast<int>(seqs1.size());
  const int n2 = static_cast<int>(seqs2.size());
  check_weights(static_cast<size_t>(n1) * n2, weights);
  std::vector<std::vector<Vec2>> out(n2);
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < n2; ++j) {
    std::vector<Vec2> acc(seqs2[j].size(), Vec2{0.0, 0.0});
    for (int i = 0; i < n1; ++i) {
      const double w = weights[static_cast<size_t>(i) * n2 + j];
      if (w == 0.0) continue;
      const auto sub = dtw_subgradient(seqs1[i], seqs2[j]);
      for (size_t k = 0; k < acc.size(); ++k) {
        acc[k][0] += w * sub[k][0];
        acc[k][1] += w * sub[k][1];
      }
    }
    out[j] = std::move(acc);
  }
  return out;
}

// The reference kernels repeat the math in plain loops.  They follow the same
// summation order contract (kGradChunk-wide partial sums combined in index
// order), so agreement with the parallel kernels is exact, not approximate.
namespace reference {

std::vector<Trajectory> rollout_batch(const GridWorldSpec& spec,
                                      const StateTransform& transform,
                                      const ActionSampler& act,
                                      std::uint64_t master_seed,
                                      std::string_view stream, int n) {
  std::vector<Trajectory> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    out.push_back(rollout(spec, transform, act, derive_seed(master_seed, stream, k)));
  }
  return out;
}

std::vector<double> pairwise_costs(
    const std::vector<std::vector<GridState>>& seqs1,
    const std::vector<std::vector<GridState>>& seqs2) {
  std::vector<double> out;
  out.reserve(seqs1.size() * seqs2.size());
  for (const auto& s1 : seqs1) {
    for (const auto& s2 : seqs2) {
      out.push_back(dtw(s1, s2).distance);
    }
  }
  return out;
}

std::vector<double> forward_scalar_batch(
    const Mlp& net, const std::vector<std::vector<double>>& inputs) {
  std::vector<double> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) out.push_back(net.forward_scalar(x));
  return out;
}

std::vector<double> weighted_param_grad(
    const Mlp& net, const std::vector<std::vector<double>>& inputs,
    const std::vector<double>& weights) {
  check_weights(inputs.size(), weights);
  const int n = static_cast<int>(inputs.size());
  const size_t P = static_cast<size_t>(net.param_count());
  std::vector<double> total(P, 0.0);
  std::vector<double> chunk_acc(P);
  const double cot = 1.0;
  for (int lo = 0; lo < n; lo += kGradChunk) {
    std::fill(chunk_acc.begin(), chunk_acc.end(), 0.0);
    for (int i = lo; i < std::min(n, lo + kGradChunk); ++i) {
      if (weights[i] == 0.0) continue;
      const auto back = net.backward(inputs[i], std::span(&cot, 1));
      for (size_t p = 0; p < P; ++p) chunk_acc[p] += weights[i] * back.param_grad[p];
    }
    for (size_t p = 0; p < P; ++p) total[p] += chunk_acc[p];
  }
  return total;
}

std::vector<std::vector<Vec2>> weighted_cost_subgrad(
    const std::vector<std::vector<GridState>>& seqs1,
    const std::vector<std::vector<GridState>>& seqs2,
    const std::vector<double>& weights) {
  const size_t n1 = seqs1.size(), n2 = seqs2.size();
  check_weights(n1 * n2, weights);
  std::vector<std::vector<Vec2>> out(n2);
  for (size_t j = 0; j < n2; ++j) {
    out[j].assign(seqs2[j].size(), Vec2{0.0, 0.0});
    for (size_t i = 0; i < n1; ++i) {
      const double w = weights[i * n2 + j];
      if (w == 0.0) continue;
      const auto sub = dtw_subgradient(seqs1[i], seqs2[j]);
      for (size_t k = 0; k < sub.size(); ++k) {
        out[j][k][0] += w * sub[k][0];
        out[j][k][1] += w * sub[k][1];
      }
    }
  }
  return out;
}

}  // namespace reference

}  // namespace undomap::batch_ops
