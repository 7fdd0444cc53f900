#include "undomap/tvd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "undomap/batch_ops.hpp"

namespace undomap {

const char* undo_family_name(UndoFamily family) {
  switch (family) {
    case UndoFamily::Linear: return "linear";
    case UndoFamily::Affine: return "affine";
    case UndoFamily::Mlp: return "mlp";
  }
  throw std::logic_error("unknown undo family");
}

UndoFamily undo_family_from_name(const std::string& name) {
  if (name == "linear") return UndoFamily::Linear;
  if (name == "affine") return UndoFamily::Affine;
  if (name == "mlp") return UndoFamily::Mlp;
  throw std::invalid_argument("unknown undo family: " + name);
}

UndoMap UndoMap::identity_linear(GridState center) {
  UndoMap u;
  u.family = UndoFamily::Linear;
  u.center = center;
  u.lin = {1.0, 0.0, 0.0, 1.0};
  return u;
}

UndoMap UndoMap::identity_affine(GridState center) {
  UndoMap u;
  u.family = UndoFamily::Affine;
  u.center = center;
  u.lin = {1.0, 0.0, 0.0, 1.0, 0.0, 0.0};
  return u;
}

UndoMap UndoMap::residual_mlp(GridState center, const std::vector<int>& hidden,
                              Rng& rng) {
  UndoMap u;
  u.family = UndoFamily::Mlp;
  u.center = center;
  u.net = Mlp::random(MlpSpec{2, hidden, 2}, rng);
  u.net_scale = std::max({center.x, center.y, 1.0});
  return u;
}

std::vector<double>& UndoMap::parameters() {
  return family == UndoFamily::Mlp ? net.params() : lin;
}

const std::vector<double>& UndoMap::parameters() const {
  return family == UndoFamily::Mlp ? net.params() : lin;
}

int UndoMap::param_count() const {
  return static_cast<int>(parameters().size());
}

GridState UndoMap::apply(const GridState& s) const {
  const double dx = s.x - center.x;
  const double dy = s.y - center.y;
  switch (family) {
    case UndoFamily::Linear:
      return {center.x + lin[0] * dx + lin[1] * dy,
              center.y + lin[2] * dx + lin[3] * dy};
    case UndoFamily::Affine:
      return {center.x + lin[0] * dx + lin[1] * dy + lin[4],
              center.y + lin[2] * dx + lin[3] * dy + lin[5]};
    case UndoFamily::Mlp: {
      const auto out = net.forward(std::vector<double>{dx / net_scale, dy / net_scale});
      return {s.x + out[0], s.y + out[1]};
    }
  }
  throw std::logic_error("unknown undo family");
}

StateMap UndoMap::fn() const {
  return [u = *this](const GridState& s) { return u.apply(s); };
}

std::vector<double> UndoMap::param_jacobian(const GridState& s) const {
  const double dx = s.x - center.x;
  const double dy = s.y - center.y;
  switch (family) {
    case UndoFamily::Linear:
      return {dx, dy, 0.0, 0.0,   // d out.x / d params
              0.0, 0.0, dx, dy};  // d out.y / d params
    case UndoFamily::Affine:
      return {dx, dy, 0.0, 0.0, 1.0, 0.0,
              0.0, 0.0, dx, dy, 0.0, 1.0};
    case UndoFamily::Mlp: {
      const std::vector<double> z{dx / net_scale, dy / net_scale};
      const double ex[2] = {1.0, 0.0}, ey[2] = {0.0, 1.0};
      const auto bx = net.backward(z, std::span(ex, 2));
      const auto by = net.backward(z, std::span(ey, 2));
      std::vector<double> jac;
      jac.reserve(2 * bx.param_grad.size());
      jac.insert(jac.end(), bx.param_grad.begin(), bx.param_grad.end());
      jac.insert(jac.end(), by.param_grad.begin(), by.param_grad.end());
      return jac;
    }
  }
  throw std::logic_error("unknown undo family");
}

std::array<double, 4> UndoMap::input_jacobian(const GridState& s) const {
  switch (family) {
    case UndoFamily::Linear:
    case UndoFamily::Affine:
      return {lin[0], lin[1], lin[2], lin[3]};
    case UndoFamily::Mlp: {
      const double dx = s.x - center.x;
      const double dy = s.y - center.y;
      const std::vector<double> z{dx / net_scale, dy / net_scale};
      const double ex[2] = {1.0, 0.0}, ey[2] = {0.0, 1.0};
      const auto bx = net.backward(z, std::span(ex, 2));
      const auto by = net.backward(z, std::span(ey, 2));
      return {1.0 + bx.input_grad[0] / net_scale, bx.input_grad[1] / net_scale,
              by.input_grad[0] / net_scale, 1.0 + by.input_grad[1] / net_scale};
    }
  }
  throw std::logic_error("unknown undo family");
}

TargetBatch undone_rollout_batch(const TvdProblem& prob, const UndoMap& undo,
                                 const Policy& pol, std::uint64_t master_seed,
                                 int episodes) {
  const ActionSampler act = [&undo, &pol](const GridState& observed, Rng& rng) {
    return pol.sample(undo.apply(observed), rng);
  };
  TargetBatch batch;
  batch.observed = batch_ops::rollout_batch(prob.spec, prob.transform, act,
                                            master_seed, "episode", episodes);
  batch.undone.reserve(batch.observed.size());
  for (const auto& traj : batch.observed) {
    Trajectory u = traj;
    for (auto& s : u.states) s = undo.apply(s);
    batch.undone.push_back(std::move(u));
  }
  return batch;
}

namespace {

// Cost-sample expansion of a trajectory batch.  TrajectoryDTW: one sample per
// trajectory.  StateL2: one per visited state (terminal excluded), weighted
// 1/L, so each trajectory carries equal total mass.  Weights sum to 1.
struct SampleSet {
  std::vector<std::vector<double>> feats;
  std::vector<std::vector<GridState>> seqs;
  std::vector<double> weight;
  std::vector<int> traj_of;
  std::vector<int> state_of;  // StateL2 only; -1 for whole-trajectory samples

  int size() const { return static_cast<int>(feats.size()); }
};

SampleSet build_samples(const std::vector<Trajectory>& trajs,
                        const Featurizer& feat) {
  SampleSet set;
  const int n = static_cast<int>(trajs.size());
  if (n == 0) throw std::invalid_argument("empty trajectory batch");
  for (int e = 0; e < n; ++e) {
    const Trajectory& traj = trajs[e];
    if (feat.mode == CostMode::TrajectoryDTW) {
      set.feats.push_back(feat.features(traj));
      set.seqs.push_back(traj.states);
      set.weight.push_back(1.0 / n);
      set.traj_of.push_back(e);
      set.state_of.push_back(-1);
    } else {
      const int L = std::max(traj.length(), 1);
      for (int t = 0; t < L; ++t) {
        set.feats.push_back(feat.features(traj.states[t]));
        set.seqs.push_back({traj.states[t]});
        set.weight.push_back(1.0 / (static_cast<double>(n) * L));
        set.traj_of.push_back(e);
        set.state_of.push_back(t);
      }
    }
  }
  return set;
}

SamplePool to_pool(SampleSet&& set) {
  SamplePool pool;
  pool.feats = std::move(set.feats);
  pool.seqs = std::move(set.seqs);
  pool.weights = std::move(set.weight);
  return pool;
}

// Everything the two Wasserstein gradient estimators share: potential values,
// the pairwise ground costs, per-target-trajectory score weights phi, the
// per-sample pathwise multiplier beta, and the hinge weights for the cost
// subgradient.
struct WassersteinTerms {
  SampleSet src, tgt;
  std::vector<double> g_vals;
  std::vector<double> phi;      // per target trajectory
  std::vector<double> beta;     // per target sample
  std::vector<double> hinge_w;  // per (src sample, tgt sample) pair
};

WassersteinTerms wasserstein_terms(const std::vector<Trajectory>& batch_source,
                                   const TargetBatch& batch_target,
                                   const DualPotentials& pot,
                                   const DivergenceSpec& div,
                                   const Featurizer& feat) {
  WassersteinTerms terms;
  terms.src = build_samples(batch_source, feat);
  terms.tgt = build_samples(batch_target.undone, feat);
  const int n1 = terms.src.size(), n2 = terms.tgt.size();
  const auto h_vals = batch_ops::forward_scalar_batch(pot.h, terms.src.feats);
  terms.g_vals = batch_ops::forward_scalar_batch(pot.g, terms.tgt.feats);
  const auto cost = batch_ops::pairwise_costs(terms.src.seqs, terms.tgt.seqs);

  terms.phi.assign(batch_target.undone.size(), 0.0);
  terms.beta.assign(n2, 0.0);
  terms.hinge_w.assign(static_cast<size_t>(n1) * n2, 0.0);
  for (int j = 0; j < n2; ++j) {
    const double wj = terms.tgt.weight[j];
    double active_mass = 0.0;
    double hinge_value = 0.0;
    for (int i = 0; i < n1; ++i) {
      const double margin =
          h_vals[i] + terms.g_vals[j] - cost[static_cast<size_t>(i) * n2 + j];
      if (margin > 0.0) {
        const double wi = terms.src.weight[i];
        active_mass += wi;
        hinge_value += wi * margin;
        terms.hinge_w[static_cast<size_t>(i) * n2 + j] = div.alpha * wi * wj;
      }
    }
    terms.beta[j] = wj * (1.0 - div.alpha * active_mass);
    terms.phi[terms.tgt.traj_of[j]] +=
        wj * (terms.g_vals[j] - div.alpha * hinge_value);
  }
  return terms;
}

// Chains state-space cotangents (gradients w.r.t. undone coordinates) through
// the undo map's parameter Jacobian at the observed states.
void chain_state_cotangents(const UndoMap& undo, const Trajectory& observed,
                            const std::vector<Vec2>& state_cot,
                            std::vector<double>& grad) {
  const int P = undo.param_count();
  for (size_t k = 0; k < state_cot.size(); ++k) {
    const auto& c = state_cot[k];
    if (c[0] == 0.0 && c[1] == 0.0) continue;
    const auto jac = undo.param_jacobian(observed.states[k]);
    for (int p = 0; p < P; ++p) {
      grad[p] += c[0] * jac[p] + c[1] * jac[P + p];
    }
  }
}

void check_batches(const std::vector<Trajectory>& batch_source,
                   const TargetBatch& batch_target) {
  if (batch_source.empty() || batch_target.observed.empty()) {
    throw std::invalid_argument("gradient estimators need nonempty batches");
  }
  if (batch_target.observed.size() != batch_target.undone.size()) {
    throw std::invalid_argument("observed/undone batch size mismatch");
  }
}

}  // namespace

std::vector<double> grad_theta(const std::vector<Trajectory>& batch_source,
                               const TargetBatch& batch_target,
                               const UndoMap& undo, const Policy& pol,
                               const DualPotentials& pot,
                               const DivergenceSpec& div,
                               const Featurizer& feat, double lambda) {
  (void)undo;  // theta's dependence enters through the already-undone states
  check_batches(batch_source, batch_target);
  const auto terms = wasserstein_terms(batch_source, batch_target, pot, div, feat);
  const int nT = static_cast<int>(batch_target.undone.size());
  std::vector<double> grad(pol.net.params().size(), 0.0);
  for (int e = 0; e < nT; ++e) {
    const double coeff =
        terms.phi[e] - lambda * batch_target.observed[e].total_return() / nT;
    if (coeff == 0.0) continue;
    const Trajectory& u = batch_target.undone[e];
    for (int t = 0; t < u.length(); ++t) {
      const auto lg = pol.log_prob_grad(u.states[t], u.actions[t]);
      for (size_t p = 0; p < grad.size(); ++p) grad[p] += coeff * lg.theta[p];
    }
  }
  return grad;
}

std::vector<double> grad_omega(const std::vector<Trajectory>& batch_source,
                               const TargetBatch& batch_target,
                               const UndoMap& undo, const Policy& pol,
                               const DualPotentials& pot,
                               const DivergenceSpec& div,
                               const Featurizer& feat, double lambda) {
  check_batches(batch_source, batch_target);
  const auto terms = wasserstein_terms(batch_source, batch_target, pot, div, feat);
  const int nT = static_cast<int>(batch_target.undone.size());
  const int P = undo.param_count();
  std::vector<double> grad(P, 0.0);

  // Score term: omega moves the action distribution via pi(a | u(s)).
  for (int e = 0; e < nT; ++e) {
    const double coeff =
        terms.phi[e] - lambda * batch_target.observed[e].total_return() / nT;
    if (coeff == 0.0) continue;
    const Trajectory& obs = batch_target.observed[e];
    const Trajectory& u = batch_target.undone[e];
    for (int t = 0; t < u.length(); ++t) {
      const auto lg = pol.log_prob_grad(u.states[t], u.actions[t]);
      const auto jac = undo.param_jacobian(obs.states[t]);
      for (int p = 0; p < P; ++p) {
        grad[p] += coeff * (lg.state[0] * jac[p] + lg.state[1] * jac[P + p]);
      }
    }
  }

  // Pathwise potential term (g through the featurizer), weighted by beta,
  // accumulated as per-state cotangents in undone coordinates.
  std::vector<std::vector<Vec2>> state_cot(nT);
  for (int e = 0; e < nT; ++e) {
    state_cot[e].assign(batch_target.undone[e].states.size(), Vec2{0.0, 0.0});
  }
  for (int j = 0; j < terms.tgt.size(); ++j) {
    if (terms.beta[j] == 0.0) continue;
    const double one = 1.0;
    const auto back = pot.g.backward(terms.tgt.feats[j], std::span(&one, 1));
    const int e = terms.tgt.traj_of[j];
    if (feat.mode == CostMode::TrajectoryDTW) {
      std::vector<double> cot(back.input_grad.size());
      for (size_t k = 0; k < cot.size(); ++k) {
        cot[k] = terms.beta[j] * back.input_grad[k];
      }
      feat.add_state_grad(batch_target.undone[e], cot, state_cot[e]);
    } else {
      const auto sg = feat.state_grad(back.input_grad);
      state_cot[e][terms.tgt.state_of[j]][0] += terms.beta[j] * sg[0];
      state_cot[e][terms.tgt.state_of[j]][1] += terms.beta[j] * sg[1];
    }
  }

  // Pathwise hinge cost term: +alpha * E[1{active} * dc/domega]; the cost
  // subgradient is taken w.r.t. the undone sequence and chained through u.
  const auto cost_grads = batch_ops::weighted_cost_subgrad(
      terms.src.seqs, terms.tgt.seqs, terms.hinge_w);
  for (int j = 0; j < terms.tgt.size(); ++j) {
    const int e = terms.tgt.traj_of[j];
    if (feat.mode == CostMode::TrajectoryDTW) {
      for (size_t k = 0; k < cost_grads[j].size(); ++k) {
        state_cot[e][k][0] += cost_grads[j][k][0];
        state_cot[e][k][1] += cost_grads[j][k][1];
      }
    } else {
      state_cot[e][terms.tgt.state_of[j]][0] += cost_grads[j][0][0];
      state_cot[e][terms.tgt.state_of[j]][1] += cost_grads[j][0][1];
    }
  }
  for (int e = 0; e < nT; ++e) {
    chain_state_cotangents(undo, batch_target.observed[e], state_cot[e], grad);
  }
  return grad;
}

FDivGradients grad_f_div(const TargetBatch& batch_target, const UndoMap& undo,
                         const Policy& pol, const Mlp& g_net,
                         DivergenceKind kind, const Featurizer& feat) {
  if (batch_target.observed.empty() ||
      batch_target.observed.size() != batch_target.undone.size()) {
    throw std::invalid_argument("grad_f_div: bad target batch");
  }
  const auto tgt = build_samples(batch_target.undone, feat);
  const auto F = batch_ops::forward_scalar_batch(g_net, tgt.feats);
  const int nT = static_cast<int>(batch_target.undone.size());

  // Objective term: -E[f*(F(u(tau')))]; only this depends on theta and omega.
  std::vector<double> phi(nT, 0.0);
  for (int j = 0; j < tgt.size(); ++j) {
    phi[tgt.traj_of[j]] -= tgt.weight[j] * f_conjugate(kind, F[j]);
  }

  FDivGradients out;
  out.theta.assign(pol.net.params().size(), 0.0);
  out.omega.assign(undo.param_count(), 0.0);
  const int P = undo.param_count();
  std::vector<std::vector<Vec2>> state_cot(nT);
  for (int e = 0; e < nT; ++e) {
    const Trajectory& obs = batch_target.observed[e];
    const Trajectory& u = batch_target.undone[e];
    state_cot[e].assign(u.states.size(), Vec2{0.0, 0.0});
    if (phi[e] == 0.0) continue;
    for (int t = 0; t < u.length(); ++t) {
      const auto lg = pol.log_prob_grad(u.states[t], u.actions[t]);
      for (size_t p = 0; p < out.theta.size(); ++p) {
        out.theta[p] += phi[e] * lg.theta[p];
      }
      const auto jac = undo.param_jacobian(obs.states[t]);
      for (int p = 0; p < P; ++p) {
        out.omega[p] += phi[e] * (lg.state[0] * jac[p] + lg.state[1] * jac[P + p]);
      }
    }
  }

  // Pathwise part: -E[f*'(F) grad_omega F] through the featurizer.
  for (int j = 0; j < tgt.size(); ++j) {
    const double mult = -tgt.weight[j] * f_conjugate_prime(kind, F[j]);
    if (mult == 0.0) continue;
    const double one = 1.0;
    const auto back = g_net.backward(tgt.feats[j], std::span(&one, 1));
    const int e = tgt.traj_of[j];
    if (feat.mode == CostMode::TrajectoryDTW) {
      std::vector<double> cot(back.input_grad.size());
      for (size_t k = 0; k < cot.size(); ++k) cot[k] = mult * back.input_grad[k];
      feat.add_state_grad(batch_target.undone[e], cot, state_cot[e]);
    } else {
      const auto sg = feat.state_grad(back.input_grad);
      state_cot[e][tgt.state_of[j]][0] += mult * sg[0];
      state_cot[e][tgt.state_of[j]][1] += mult * sg[1];
    }
  }
  for (int e = 0; e < nT; ++e) {
    chain_state_cotangents(undo, batch_target.observed[e], state_cot[e],
                           out.omega);
  }
  return out;
}

namespace {

void clip_to_norm(std::vector<double>& grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
}

void check_finite(const std::vector<double>& values, const char* tensor,
                  int iteration) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("run_tvd: " + std::string(tensor) +
                               " diverged (non-finite) at iteration " +
                               std::to_string(iteration));
    }
  }
}

std::vector<GridState> visited_states(const Trajectory& traj) {
  std::vector<GridState> out;
  const int L = std::max(traj.length(), 1);
  out.reserve(L);
  for (int t = 0; t < L && t < static_cast<int>(traj.states.size()); ++t) {
    out.push_back(traj.states[t]);
  }
  return out;
}

std::vector<GridState> error_sample(const TvdProblem& prob,
                                    const TvDConfig& cfg,
                                    const Policy* source_policy,
                                    const DemoSet* demos) {
  std::vector<GridState> states;
  if (source_policy) {
    const auto master = derive_seed(cfg.seed, "error-sample");
    const auto sampler = source_policy->sampler();
    for (int k = 0; static_cast<int>(states.size()) < cfg.error_sample_size; ++k) {
      const auto traj = rollout(prob.spec, StateTransform::identity(), sampler,
                                derive_seed(master, "episode", k));
      for (const auto& s : visited_states(traj)) states.push_back(s);
    }
  } else {
    for (size_t k = 0; static_cast<int>(states.size()) < cfg.error_sample_size; ++k) {
      const auto& traj = demos->trajectories[k % demos->trajectories.size()];
      for (const auto& s : visited_states(traj)) states.push_back(s);
    }
  }
  states.resize(cfg.error_sample_size);
  return states;
}

SamplePool batch_pool(const std::vector<Trajectory>& trajs,
                      const Featurizer& feat) {
  return to_pool(build_samples(trajs, feat));
}

}  // namespace

TvDState run_tvd(const TvdProblem& prob, const TvDConfig& cfg,
                 const Policy* source_policy, const DemoSet* demos,
                 const TvDState* resume_from, const CheckpointHook& hook) {
  prob.spec.validate();
  if (cfg.freeze_policy && source_policy == nullptr) {
    throw std::invalid_argument("run_tvd: freeze_policy requires a source policy");
  }
  if (!cfg.freeze_policy && demos == nullptr) {
    throw std::invalid_argument("run_tvd: learning the policy requires demonstrations");
  }
  if (demos != nullptr) demos->validate(prob.spec);
  if (cfg.lambda != 0.0 && cfg.divergence.kind != DivergenceKind::Wasserstein) {
    throw std::invalid_argument("run_tvd: lambda augmentation requires the wasserstein objective");
  }
  const Featurizer feat{cfg.divergence.cost.mode, prob.spec};
  const bool wasserstein = cfg.divergence.kind == DivergenceKind::Wasserstein;

  TvDState state;
  if (resume_from != nullptr) {
    state = *resume_from;
  } else {
    switch (cfg.family) {
      case UndoFamily::Linear:
        state.undo = UndoMap::identity_linear(prob.spec.center());
        break;
      case UndoFamily::Affine:
        state.undo = UndoMap::identity_affine(prob.spec.center());
        break;
      case UndoFamily::Mlp: {
        Rng rng(derive_seed(cfg.seed, "undo-init"));
        state.undo = UndoMap::residual_mlp(prob.spec.center(), cfg.undo_hidden, rng);
        break;
      }
    }
    if (cfg.freeze_policy) {
      state.policy = *source_policy;
    } else {
      Rng rng(derive_seed(cfg.seed, "policy-init"));
      state.policy = Policy::random(prob.spec, rng);
    }
    Rng prng(derive_seed(cfg.seed, "potential-init"));
    state.potentials = DualPotentials::random(
        feat.dim(), cfg.divergence.potential_hidden, prng);
    state.iteration = 0;
  }

  const auto err_states = error_sample(prob, cfg, source_policy, demos);

  for (int t = state.iteration; t < cfg.outer_iterations; ++t) {
    // (a) collect this iteration's source samples and target rollouts.
    std::vector<Trajectory> batch_source;
    if (cfg.freeze_policy) {
      batch_source = batch_ops::rollout_batch(
          prob.spec, StateTransform::identity(), source_policy->sampler(),
          derive_seed(cfg.seed, "source-roll", t), "episode", cfg.rollout_batch);
    } else {
      Rng rng(derive_seed(cfg.seed, "demo-batch", t));
      const int n = static_cast<int>(demos->trajectories.size());
      for (int k = 0; k < cfg.rollout_batch; ++k) {
        const int idx = std::min(static_cast<int>(rng.uniform() * n), n - 1);
        batch_source.push_back(demos->trajectories[idx]);
      }
    }
    const TargetBatch batch_target = undone_rollout_batch(
        prob, state.undo, state.policy,
        derive_seed(cfg.seed, "target-roll", t), cfg.rollout_batch);

    // (b) inner maximization over the potentials.
    const SamplePool pool_src = batch_pool(batch_source, feat);
    const SamplePool pool_tgt = batch_pool(batch_target.undone, feat);
    const auto pool_cost = batch_ops::pairwise_costs(pool_src.seqs, pool_tgt.seqs);
    if (t == 0) {
      double mean_cost = 0.0;
      for (double c : pool_cost) mean_cost += c;
      mean_cost /= static_cast<double>(pool_cost.size());
      warm_start(state.potentials, mean_cost);
    }
    Rng prng(derive_seed(cfg.seed, "potentials", t));
    if (wasserstein) {
      update_potentials(pool_src, pool_tgt, pool_cost, state.potentials,
                        cfg.divergence, prng);
    } else {
      train_f_potential(pool_src, pool_tgt, state.potentials.g, cfg.divergence,
                        prng);
    }

    // (c) one descent step on omega (and theta unless frozen).
    std::vector<double> g_omega, g_theta;
    if (wasserstein) {
      g_omega = grad_omega(batch_source, batch_target, state.undo, state.policy,
                           state.potentials, cfg.divergence, feat, cfg.lambda);
      if (!cfg.freeze_policy) {
        g_theta = grad_theta(batch_source, batch_target, state.undo,
                             state.policy, state.potentials, cfg.divergence,
                             feat, cfg.lambda);
      }
    } else {
      auto grads = grad_f_div(batch_target, state.undo, state.policy,
                              state.potentials.g, cfg.divergence.kind, feat);
      g_omega = std::move(grads.omega);
      if (!cfg.freeze_policy) g_theta = std::move(grads.theta);
    }
    check_finite(g_omega, "undo-map gradient", t);
    clip_to_norm(g_omega, cfg.grad_clip);
    auto& omega = state.undo.parameters();
    for (size_t p = 0; p < omega.size(); ++p) {
      omega[p] -= cfg.outer_lr * g_omega[p];
    }
    check_finite(omega, "undo-map parameters", t);
    if (!cfg.freeze_policy) {
      check_finite(g_theta, "policy gradient", t);
      clip_to_norm(g_theta, cfg.grad_clip);
      auto& theta = state.policy.net.params();
      for (size_t p = 0; p < theta.size(); ++p) {
        theta[p] -= cfg.policy_lr * g_theta[p];
      }
      check_finite(theta, "policy parameters", t);
    }

    // (d) metrics on held-out batches with the post-step parameters.
    std::vector<Trajectory> eval_source;
    if (cfg.freeze_policy) {
      eval_source = batch_ops::rollout_batch(
          prob.spec, StateTransform::identity(), source_policy->sampler(),
          derive_seed(cfg.seed, "eval-source-roll", t), "episode",
          cfg.eval_episodes);
    } else {
      Rng rng(derive_seed(cfg.seed, "eval-demo-batch", t));
      const int n = static_cast<int>(demos->trajectories.size());
      for (int k = 0; k < cfg.eval_episodes; ++k) {
        const int idx = std::min(static_cast<int>(rng.uniform() * n), n - 1);
        eval_source.push_back(demos->trajectories[idx]);
      }
    }
    const TargetBatch eval_target = undone_rollout_batch(
        prob, state.undo, state.policy,
        derive_seed(cfg.seed, "eval-target-roll", t), cfg.eval_episodes);
    const SamplePool eval_src_pool = batch_pool(eval_source, feat);
    const SamplePool eval_tgt_pool = batch_pool(eval_target.undone, feat);
    const auto eval_cost =
        batch_ops::pairwise_costs(eval_src_pool.seqs, eval_tgt_pool.seqs);
    double estimate;
    if (wasserstein) {
      estimate = wasserstein_track(eval_src_pool, eval_tgt_pool, eval_cost,
                                   state.potentials, cfg.divergence);
    } else {
      estimate = divergence_report_value(
          cfg.divergence.kind,
          f_div_objective(eval_src_pool.feats, eval_tgt_pool.feats,
                          state.potentials.g, cfg.divergence.kind,
                          eval_src_pool.weights, eval_tgt_pool.weights));
    }
    double target_return = 0.0;
    for (const auto& traj : eval_target.observed) {
      target_return += traj.total_return();
    }
    target_return /= static_cast<double>(eval_target.observed.size());
    const double err =
        undo_map_error(err_states, state.undo.fn(), prob.transform);

    state.history.push_back({t + 1, estimate, target_return, err});
    state.iteration = t + 1;
    if (hook && ((t + 1) % cfg.checkpoint_every == 0 ||
                 t + 1 == cfg.outer_iterations)) {
      hook(state);
    }
  }
  return state;
}

}  // namespace undomap
