#include "undomap/divergences.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "undomap/batch_ops.hpp"

namespace undomap {

namespace {

constexpr double kKlExpClamp = 20.0;

double weight_at(std::span<const double> weights, int i, int n) {
  return weights.empty() ? 1.0 / n : weights[i];
}

}  // namespace

const char* divergence_name(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::Wasserstein: return "wasserstein";
    case DivergenceKind::Chi2: return "chi2";
    case DivergenceKind::TV: return "tv";
    case DivergenceKind::KL: return "kl";
  }
  throw std::logic_error("unknown divergence kind");
}

DivergenceKind divergence_from_name(const std::string& name) {
  if (name == "wasserstein") return DivergenceKind::Wasserstein;
  if (name == "chi2") return DivergenceKind::Chi2;
  if (name == "tv") return DivergenceKind::TV;
  if (name == "kl") return DivergenceKind::KL;
  throw std::invalid_argument("unknown divergence kind: " + name);
}

int Featurizer::dim() const {
  return mode == CostMode::StateL2 ? 2 : 2 * grid.horizon + 1;
}

std::vector<double> Featurizer::features(const Trajectory& traj) const {
  if (mode != CostMode::TrajectoryDTW) {
    throw std::logic_error("trajectory features require TrajectoryDTW mode");
  }
  if (traj.states.empty()) {
    throw std::invalid_argument("cannot featurize an empty trajectory");
  }
  const int H = grid.horizon;
  const int L = std::clamp(traj.length(), 1, H);
  std::vector<double> out(static_cast<size_t>(2 * H + 1));
  for (int t = 0; t < H; ++t) {
    const GridState n = normalize_state(grid, traj.states[std::min(t, L - 1)]);
    out[2 * t] = n.x;
    out[2 * t + 1] = n.y;
  }
  out[2 * H] = static_cast<double>(L) / H;
  return out;
}

std::vector<double> Featurizer::features(const GridState& s) const {
  if (mode != CostMode::StateL2) {
    throw std::logic_error("state features require StateL2 mode");
  }
  const GridState n = normalize_state(grid, s);
  return {n.x, n.y};
}

void Featurizer::add_state_grad(const Trajectory& traj,
                                std::span<const double> cot,
                                std::vector<Vec2>& out) const {
  if (mode != CostMode::TrajectoryDTW) {
    throw std::logic_error("trajectory features require TrajectoryDTW mode");
  }
  const int H = grid.horizon;
  if (static_cast<int>(cot.size()) != 2 * H + 1 ||
      out.size() != traj.states.size()) {
    throw std::invalid_argument("add_state_grad: size mismatch");
  }
  const int L = std::clamp(traj.length(), 1, H);
  const double sx = 2.0 / std::max(grid.width - 1, 1);
  const double sy = 2.0 / std::max(grid.height - 1, 1);
  for (int t = 0; t < H; ++t) {
    const int idx = std::min(t, L - 1);
    out[idx][0] += cot[2 * t] * sx;
    out[idx][1] += cot[2 * t + 1] * sy;
  }
}

Vec2 Featurizer::state_grad(std::span<const double> cot) const {
  if (mode != CostMode::StateL2 || cot.size() != 2) {
    throw std::logic_error("state_grad requires StateL2 mode");
  }
  const double sx = 2.0 / std::max(grid.width - 1, 1);
  const double sy = 2.0 / std::max(grid.height - 1, 1);
  return {cot[0] * sx, cot[1] * sy};
}

DualPotentials DualPotentials::random(int feature_dim,
                                      const std::vector<int>& hidden,
                                      Rng& rng) {
  MlpSpec spec{feature_dim, hidden, 1};
  DualPotentials pot{Mlp::random(spec, rng), Mlp::random(spec, rng)};
  return pot;
}

void set_output_bias(Mlp& net, double value) {
  if (net.spec().output_dim != 1) {
    throw std::logic_error("set_output_bias requires a scalar net");
  }
  net.params().back() = value;
}

void warm_start(DualPotentials& pot, double mean_cost) {
  set_output_bias(pot.h, 0.5 * mean_cost);
  set_output_bias(pot.g, 0.5 * mean_cost);
}

SamplePool make_trajectory_pool(const std::vector<Trajectory>& trajs,
                                const Featurizer& feat) {
  SamplePool pool;
  pool.feats.reserve(trajs.size());
  pool.seqs.reserve(trajs.size());
  for (const auto& traj : trajs) {
    pool.feats.push_back(feat.features(traj));
    pool.seqs.push_back(traj.states);
  }
  return pool;
}

SamplePool make_state_pool(const std::vector<GridState>& states,
                           const Featurizer& feat) {
  SamplePool pool;
  pool.feats.reserve(states.size());
  pool.seqs.reserve(states.size());
  for (const auto& s : states) {
    pool.feats.push_back(feat.features(s));
    pool.seqs.push_back({s});
  }
  return pool;
}

std::vector<int> sample_pool_indices(const SamplePool& pool, int batch_size,
                                     Rng& rng) {
  if (pool.size() == 0) throw std::invalid_argument("empty sample pool");
  std::vector<int> idx(batch_size);
  if (pool.weights.empty()) {
    for (int& i : idx) {
      i = static_cast<int>(rng.uniform() * pool.size());
      i = std::min(i, pool.size() - 1);
    }
  } else {
    for (int& i : idx) {
      i = rng.categorical(pool.weights.data(), pool.size());
    }
  }
  return idx;
}

DivergenceEstimate wasserstein_objective(
    const std::vector<std::vector<double>>& feats1,
    const std::vector<std::vector<double>>& feats2,
    const std::vector<double>& cost, const DualPotentials& pot, double alpha,
    std::span<const double> weights1, std::span<const double> weights2) {
  const int n1 = static_cast<int>(feats1.size());
  const int n2 = static_cast<int>(feats2.size());
  if (n1 == 0 || n2 == 0) throw std::invalid_argument("empty batch");
  if (static_cast<int>(cost.size()) != n1 * n2) {
    throw std::invalid_argument("wasserstein_objective: cost size mismatch");
  }
  const auto h_vals = batch_ops::forward_scalar_batch(pot.h, feats1);
  const auto g_vals = batch_ops::forward_scalar_batch(pot.g, feats2);

  DivergenceEstimate est;
  for (int i = 0; i < n1; ++i) est.value += weight_at(weights1, i, n1) * h_vals[i];
  for (int j = 0; j < n2; ++j) est.value += weight_at(weights2, j, n2) * g_vals[j];
  double hinge = 0.0, active_mass = 0.0;
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      const double margin = h_vals[i] + g_vals[j] - cost[i * n2 + j];
      if (margin > 0.0) {
        const double w =
            weight_at(weights1, i, n1) * weight_at(weights2, j, n2);
        hinge += w * margin;
        active_mass += w;
      }
    }
  }
  est.value -= alpha * hinge;
  est.hinge_violation_rate = active_mass;
  return est;
}

namespace {

void check_potentials_finite(const DualPotentials& pot) {
  if (!pot.h.params_finite()) {
    throw std::runtime_error("potential parameters diverged (h net)");
  }
  if (!pot.g.params_finite()) {
    throw std::runtime_error("potential parameters diverged (g net)");
  }
}

}  // namespace

PotentialTrainStats update_potentials(const SamplePool& p1,
                                      const SamplePool& p2,
                                      const std::vector<double>& pool_cost,
                                      DualPotentials& pot,
                                      const DivergenceSpec& spec, Rng& rng) {
  if (static_cast<int>(pool_cost.size()) != p1.size() * p2.size()) {
    throw std::invalid_argument("update_potentials: cost size mismatch");
  }
  const int B = spec.batch_size;
  PotentialTrainStats stats;
  std::vector<std::vector<double>> batch1(B), batch2(B);
  std::vector<double> cost(static_cast<size_t>(B) * B);
  for (int step = 0; step < spec.inner_steps; ++step) {
    const auto idx1 = sample_pool_indices(p1, B, rng);
    const auto idx2 = sample_pool_indices(p2, B, rng);
    for (int k = 0; k < B; ++k) {
      batch1[k] = p1.feats[idx1[k]];
      batch2[k] = p2.feats[idx2[k]];
    }
    for (int i = 0; i < B; ++i) {
      for (int j = 0; j < B; ++j) {
        cost[i * B + j] = pool_cost[idx1[i] * p2.size() + idx2[j]];
      }
    }
    const auto h_vals = batch_ops::forward_scalar_batch(pot.h, batch1);
    const auto g_vals = batch_ops::forward_scalar_batch(pot.g, batch2);

    // Ascent weights: 1/B for the mean term minus alpha/B^2 per active pair.
    std::vector<double> wh(B, 1.0 / B), wg(B, 1.0 / B);
    double hinge_sum = 0.0;
    int active = 0;
    for (int i = 0; i < B; ++i) {
      for (int j = 0; j < B; ++j) {
        const double margin = h_vals[i] + g_vals[j] - cost[i * B + j];
        if (margin > 0.0) {
          wh[i] -= spec.alpha / (static_cast<double>(B) * B);
          wg[j] -= spec.alpha / (static_cast<double>(B) * B);
          hinge_sum += margin;
          ++active;
        }
      }
    }
    const auto gh = batch_ops::weighted_param_grad(pot.h, batch1, wh);
    const auto gg = batch_ops::weighted_param_grad(pot.g, batch2, wg);
    for (size_t p = 0; p < gh.size(); ++p) {
      pot.h.params()[p] += spec.potential_lr * gh[p];
    }
    for (size_t p = 0; p < gg.size(); ++p) {
      pot.g.params()[p] += spec.potential_lr * gg[p];
    }
    check_potentials_finite(pot);

    ++stats.steps;
    if (step + 1 == spec.inner_steps) {
      double mean_h = 0.0, mean_g = 0.0;
      for (int i = 0; i < B; ++i) mean_h += h_vals[i] / B;
      for (int j = 0; j < B; ++j) mean_g += g_vals[j] / B;
      stats.last_objective =
          mean_h + mean_g - spec.alpha * hinge_sum / (static_cast<double>(B) * B);
      stats.last_hinge_rate = static_cast<double>(active) / (B * B);
    }
  }
  return stats;
}

double f_conjugate(DivergenceKind kind, double y) {
  switch (kind) {
    case DivergenceKind::Chi2:
      return y + 0.25 * y * y;
    case DivergenceKind::TV:
      return std::clamp(y, -0.5, 0.5);
    case DivergenceKind::KL:
      return std::exp(std::min(y, kKlExpClamp));
    case DivergenceKind::Wasserstein:
      break;
  }
  throw std::logic_error("f_conjugate: not an f-divergence kind");
}

double f_conjugate_prime(DivergenceKind kind, double y) {
  switch (kind) {
    case DivergenceKind::Chi2:
      return 1.0 + 0.5 * y;
    case DivergenceKind::TV:
      return 1.0;
    case DivergenceKind::KL:
      return std::exp(std::min(y, kKlExpClamp));
    case DivergenceKind::Wasserstein:
      break;
  }
  throw std::logic_error("f_conjugate_prime: not an f-divergence kind");
}

double clamp_potential(DivergenceKind kind, double y) {
  return kind == DivergenceKind::TV ? std::clamp(y, -0.5, 0.5) : y;
}

double f_div_objective(const std::vector<std::vector<double>>& feats1,
                       const std::vector<std::vector<double>>& feats2,
                       const Mlp& g_net, DivergenceKind kind,
                       std::span<const double> weights1,
                       std::span<const double> weights2) {
  const int n1 = static_cast<int>(feats1.size());
  const int n2 = static_cast<int>(feats2.size());
  if (n1 == 0 || n2 == 0) throw std::invalid_argument("empty batch");
  const auto v1 = batch_ops::forward_scalar_batch(g_net, feats1);
  const auto v2 = batch_ops::forward_scalar_batch(g_net, feats2);
  double value = 0.0;
  for (int i = 0; i < n1; ++i) {
    value += weight_at(weights1, i, n1) * clamp_potential(kind, v1[i]);
  }
  for (int j = 0; j < n2; ++j) {
    value -= weight_at(weights2, j, n2) * f_conjugate(kind, v2[j]);
  }
  return value;
}

void update_f_potential(const std::vector<std::vector<double>>& feats1,
                        const std::vector<std::vector<double>>& feats2,
                        Mlp& g_net, DivergenceKind kind, double eta) {
  const int n1 = static_cast<int>(feats1.size());
  const int n2 = static_cast<int>(feats2.size());
  if (n1 == 0 || n2 == 0) throw std::invalid_argument("empty batch");
  const auto v2 = batch_ops::forward_scalar_batch(g_net, feats2);

  // One concatenated weighted-gradient pass: +1/n1 on the first batch,
  // -f*'(F)/n2 on the second.
  std::vector<std::vector<double>> all;
  all.reserve(n1 + n2);
  std::vector<double> w;
  w.reserve(n1 + n2);
  for (int i = 0; i < n1; ++i) {
    all.push_back(feats1[i]);
    w.push_back(1.0 / n1);
  }
  for (int j = 0; j < n2; ++j) {
    all.push_back(feats2[j]);
    w.push_back(-f_conjugate_prime(kind, v2[j]) / n2);
  }
  const auto grad = batch_ops::weighted_param_grad(g_net, all, w);
  for (size_t p = 0; p < grad.size(); ++p) g_net.params()[p] += eta * grad[p];
  if (!g_net.params_finite()) {
    throw std::runtime_error("potential parameters diverged (f-divergence net)");
  }
}

PotentialTrainStats train_f_potential(const SamplePool& p1,
                                      const SamplePool& p2, Mlp& g_net,
                                      const DivergenceSpec& spec, Rng& rng) {
  const int B = spec.batch_size;
  PotentialTrainStats stats;
  std::vector<std::vector<double>> batch1(B), batch2(B);
  for (int step = 0; step < spec.inner_steps; ++step) {
    const auto idx1 = sample_pool_indices(p1, B, rng);
    const auto idx2 = sample_pool_indices(p2, B, rng);
    for (int k = 0; k < B; ++k) {
      batch1[k] = p1.feats[idx1[k]];
      batch2[k] = p2.feats[idx2[k]];
    }
    update_f_potential(batch1, batch2, g_net, spec.kind, spec.potential_lr);
    ++stats.steps;
    if (step + 1 == spec.inner_steps) {
      stats.last_objective = f_div_objective(batch1, batch2, g_net, spec.kind);
    }
  }
  return stats;
}

double divergence_report_value(DivergenceKind kind, double raw) {
  return kind == DivergenceKind::KL ? raw + 1.0 : raw;
}

}  // namespace undomap
