#include "undomap/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "undomap/batch_ops.hpp"

namespace undomap {

namespace {

std::array<double, kNumActions> softmax(const std::vector<double>& logits) {
  double top = logits[0];
  for (double z : logits) top = std::max(top, z);
  std::array<double, kNumActions> probs{};
  double total = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    probs[a] = std::exp(logits[a] - top);
    total += probs[a];
  }
  for (double& p : probs) p /= total;
  return probs;
}

std::vector<double> policy_input(const Policy& pol, const GridState& s) {
  const GridState n = normalize_state(pol.grid, s);
  return {n.x, n.y};
}

}  // namespace

Policy Policy::random(const GridWorldSpec& grid, Rng& rng,
                      const std::vector<int>& hidden) {
  return Policy{grid, Mlp::random(MlpSpec{2, hidden, kNumActions}, rng)};
}

std::array<double, kNumActions> Policy::action_distribution(
    const GridState& s) const {
  return softmax(net.forward(policy_input(*this, s)));
}

double Policy::entropy(const GridState& s) const {
  const auto probs = action_distribution(s);
  double h = 0.0;
  for (double p : probs) h -= p * std::log(p);
  return h;
}

Action Policy::sample(const GridState& s, Rng& rng) const {
  const auto probs = action_distribution(s);
  return static_cast<Action>(rng.categorical(probs.data(), kNumActions));
}

ActionSampler Policy::sampler() const {
  return [pol = *this](const GridState& observed, Rng& rng) {
    return pol.sample(observed, rng);
  };
}

Policy::LogProbGrad Policy::log_prob_grad(const GridState& s, Action a) const {
  const auto input = policy_input(*this, s);
  const auto probs = softmax(net.forward(input));
  std::vector<double> cot(kNumActions);
  for (int k = 0; k < kNumActions; ++k) {
    cot[k] = (k == static_cast<int>(a) ? 1.0 : 0.0) - probs[k];
  }
  auto back = net.backward(input, cot);
  // Chain through the input normalization to raw grid coordinates.
  const double sx = 2.0 / std::max(grid.width - 1, 1);
  const double sy = 2.0 / std::max(grid.height - 1, 1);
  return {std::move(back.param_grad),
          Vec2{back.input_grad[0] * sx, back.input_grad[1] * sy}};
}

std::array<double, kNumActions> Policy::entropy_logit_grad(
    const GridState& s) const {
  const auto probs = action_distribution(s);
  double h = 0.0;
  for (double p : probs) h -= p * std::log(p);
  std::array<double, kNumActions> grad{};
  for (int k = 0; k < kNumActions; ++k) {
    grad[k] = -probs[k] * (std::log(probs[k]) + h);
  }
  return grad;
}

const char* regime_name(SourceRegime regime) {
  switch (regime) {
    case SourceRegime::LowEntropyOptimal: return "low_entropy_optimal";
    case SourceRegime::HighEntropyOptimal: return "high_entropy_optimal";
    case SourceRegime::HighEntropySuboptimal: return "high_entropy_suboptimal";
  }
  throw std::logic_error("unknown regime");
}

SourceRegime regime_from_name(const std::string& name) {
  if (name == "low_entropy_optimal") return SourceRegime::LowEntropyOptimal;
  if (name == "high_entropy_optimal") return SourceRegime::HighEntropyOptimal;
  if (name == "high_entropy_suboptimal") return SourceRegime::HighEntropySuboptimal;
  throw std::invalid_argument("unknown regime: " + name);
}

PolicyEval evaluate_policy(const GridWorldSpec& spec,
                           const StateTransform& transform, const Policy& pol,
                           const StateMap& undo, int episodes,
                           std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate_policy: episodes >= 1");
  ActionSampler act;
  if (undo) {
    act = [&pol, &undo](const GridState& observed, Rng& rng) {
      return pol.sample(undo(observed), rng);
    };
  } else {
    act = pol.sampler();
  }
  const auto batch = batch_ops::rollout_batch(spec, transform, act, seed,
                                              "eval-episode", episodes);
  PolicyEval eval;
  long steps = 0;
  double entropy_sum = 0.0;
  for (const auto& traj : batch) {
    eval.mean_return += traj.total_return();
    if (reached_goal(spec, transform, traj)) eval.goal_rate += 1.0;
    for (int t = 0; t < traj.length(); ++t) {
      const GridState input = undo ? undo(traj.states[t]) : traj.states[t];
      entropy_sum += pol.entropy(input);
      ++steps;
    }
  }
  eval.goal_rate /= episodes;
  eval.mean_return /= episodes;
  eval.mean_entropy = entropy_sum / std::max<long>(steps, 1);
  return eval;
}

TrainSourceOptions default_train_options(SourceRegime regime) {
  TrainSourceOptions opt;
  switch (regime) {
    case SourceRegime::LowEntropyOptimal:
      // Both Right and Down stay optimal at interior cells, so a zero bonus
      // can leave the policy mixed at ties; the negative tail sharpens it to
      // a near-deterministic path.
      opt.iterations = 800;
      opt.beta_start = 0.05;
      opt.beta_end = -0.1;
      break;
    case SourceRegime::HighEntropyOptimal:
      // Entropy >= 0.7 nats needs visible mass on the off-path actions, not
      // just a Right/Down coin flip (that caps out near ln 2 minus the forced
      // edge segments), hence the strong bonus.
      opt.iterations = 800;
      opt.beta_start = 0.8;
      opt.beta_end = 0.8;
      break;
    case SourceRegime::HighEntropySuboptimal:
      // Band regime: the trainer probes the gates each iteration and stops
      // inside the goal-rate window, so iterations is only a budget.
      opt.iterations = 120;
      opt.beta_start = 0.8;
      opt.beta_end = 0.8;
      break;
  }
  return opt;
}

bool regime_gates_pass(SourceRegime regime, const PolicyEval& eval) {
  switch (regime) {
    case SourceRegime::LowEntropyOptimal:
      return eval.goal_rate >= 0.95 && eval.mean_entropy <= 0.3;
    case SourceRegime::HighEntropyOptimal:
      return eval.goal_rate >= 0.95 && eval.mean_entropy >= 0.7;
    case SourceRegime::HighEntropySuboptimal:
      return eval.goal_rate >= 0.1 && eval.goal_rate <= 0.8 &&
             eval.mean_entropy >= 0.7;
  }
  throw std::logic_error("unknown regime");
}

std::string regime_gates_text(SourceRegime regime) {
  switch (regime) {
    case SourceRegime::LowEntropyOptimal:
      return "goal_rate >= 0.95 and mean_entropy <= 0.3";
    case SourceRegime::HighEntropyOptimal:
      return "goal_rate >= 0.95 and mean_entropy >= 0.7";
    case SourceRegime::HighEntropySuboptimal:
      return "goal_rate in [0.1, 0.8] and mean_entropy >= 0.7";
  }
  throw std::logic_error("unknown regime");
}

namespace {

// Diagonal Adam ascent state.
struct Adam {
  double lr;
  std::vector<double> m, v;
  long t = 0;

  Adam(double lr, size_t n) : lr(lr), m(n, 0.0), v(n, 0.0) {}

  void ascend(std::vector<double>& params, const std::vector<double>& grad) {
    ++t;
    const double c1 = 1.0 - std::pow(0.9, t);
    const double c2 = 1.0 - std::pow(0.999, t);
    for (size_t i = 0; i < params.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grad[i];
      v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
      params[i] += lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
    }
  }
};

}  // namespace

TrainedSource train_source(const GridWorldSpec& spec, SourceRegime regime,
                           std::uint64_t seed, const TrainSourceOptions& opt) {
  spec.validate();
  Rng init_rng(derive_seed(seed, "policy-init"));
  Policy pol = Policy::random(spec, init_rng, opt.hidden);
  Adam adam(opt.lr, pol.net.params().size());
  const auto identity = StateTransform::identity();

  for (int iter = 0; iter < opt.iterations; ++iter) {
    const auto batch = batch_ops::rollout_batch(
        spec, identity, pol.sampler(),
        derive_seed(seed, "source-train", iter), "episode", opt.batch_episodes);
    double baseline = 0.0;
    for (const auto& traj : batch) baseline += traj.total_return();
    baseline /= opt.batch_episodes;

    const double frac = opt.iterations > 1
                            ? static_cast<double>(iter) / (opt.iterations - 1)
                            : 0.0;
    const double beta = opt.beta_start + (opt.beta_end - opt.beta_start) * frac;

    // Ascent direction of (1/N) sum_e [(R_e - b) sum_t log pi + beta sum_t H].
    std::vector<double> grad(pol.net.params().size(), 0.0);
    for (const auto& traj : batch) {
      const double adv = traj.total_return() - baseline;
      for (int t = 0; t < traj.length(); ++t) {
        const auto input = policy_input(pol, traj.states[t]);
        const auto probs = softmax(pol.net.forward(input));
        const auto ent_cot = pol.entropy_logit_grad(traj.states[t]);
        std::vector<double> cot(kNumActions);
        for (int k = 0; k < kNumActions; ++k) {
          const double indicator =
              (k == static_cast<int>(traj.actions[t])) ? 1.0 : 0.0;
          cot[k] = adv * (indicator - probs[k]) + beta * ent_cot[k];
        }
        const auto back = pol.net.backward(input, cot);
        for (size_t p = 0; p < grad.size(); ++p) grad[p] += back.param_grad[p];
      }
    }
    for (double& g : grad) g /= opt.batch_episodes;
    adam.ascend(pol.net.params(), grad);
    if (!pol.net.params_finite()) {
      throw std::runtime_error(
          "train_source: non-finite policy parameters at iteration " +
          std::to_string(iter));
    }

    // The suboptimal regime targets a goal-rate band that full convergence
    // overshoots; probe the gates each iteration and stop once safely inside
    // the window (interior margin, not the band edge).
    if (regime == SourceRegime::HighEntropySuboptimal) {
      const PolicyEval probe =
          evaluate_policy(spec, identity, pol, nullptr, opt.eval_episodes,
                          derive_seed(seed, "regime-eval", iter + 1));
      if (probe.goal_rate >= 0.3 && probe.goal_rate <= 0.7 &&
          regime_gates_pass(regime, probe)) {
        return {std::move(pol), probe, iter + 1};
      }
    }
  }

  const PolicyEval eval =
      evaluate_policy(spec, identity, pol, nullptr, opt.eval_episodes,
                      derive_seed(seed, "regime-eval"));
  if (!regime_gates_pass(regime, eval)) {
    std::ostringstream msg;
    msg.setf(std::ios::fixed);
    msg.precision(3);
    msg << "train_source: regime " << regime_name(regime)
        << " gates unmet after " << opt.iterations
        << " iterations (goal_rate=" << eval.goal_rate
        << ", mean_return=" << eval.mean_return
        << ", mean_entropy=" << eval.mean_entropy << "; need "
        << regime_gates_text(regime) << ")";
    throw std::runtime_error(msg.str());
  }
  return {std::move(pol), eval, opt.iterations};
}

TrainedSource train_source(const GridWorldSpec& spec, SourceRegime regime,
                           std::uint64_t seed) {
  return train_source(spec, regime, seed, default_train_options(regime));
}

void DemoSet::validate(const GridWorldSpec& spec) const {
  if (trajectories.empty()) {
    throw std::invalid_argument("demo set must be nonempty");
  }
  for (const auto& traj : trajectories) {
    for (const auto& s : traj.states) {
      if (s.x < 0 || s.x > spec.width - 1 || s.y < 0 || s.y > spec.height - 1) {
        throw std::invalid_argument("demo state outside the source grid");
      }
    }
  }
}

ActionSampler edge_expert(const GridWorldSpec& spec) {
  const GridState goal = spec.goal;
  return [goal](const GridState& s, Rng&) {
    if (s.x < goal.x) return Action::Right;
    if (s.x > goal.x) return Action::Left;
    if (s.y < goal.y) return Action::Down;
    return Action::Up;
  };
}

}  // namespace undomap
