#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "undomap/batch_ops.hpp"
#include "undomap/divergences.hpp"
#include "undomap/grid.hpp"
#include "undomap/policy.hpp"
#include "undomap/rng.hpp"
#include "undomap/tvd.hpp"

using namespace undomap;

namespace {

Policy uniform_policy(const GridWorldSpec& spec) {
  return Policy{spec, Mlp(MlpSpec{2, {}, 4})};  // zero logits everywhere
}

std::vector<double> fd_param_jacobian(const UndoMap& base, const GridState& s,
                                      double h) {
  const int P = base.param_count();
  std::vector<double> jac(2 * P);
  for (int p = 0; p < P; ++p) {
    UndoMap up = base, um = base;
    up.parameters()[p] += h;
    um.parameters()[p] -= h;
    const GridState a = up.apply(s), b = um.apply(s);
    jac[p] = (a.x - b.x) / (2 * h);
    jac[P + p] = (a.y - b.y) / (2 * h);
  }
  return jac;
}

void check_close(double an, double fd, double rel) {
  CHECK(std::abs(an - fd) <= rel * std::max({std::abs(an), std::abs(fd), 1e-6}));
}

// Mirrors the estimator's cost-sample expansion: TrajectoryDTW yields one
// sample per episode, StateL2 one per visited state weighted 1/(n*L).
struct Expanded {
  std::vector<std::vector<double>> feats;
  std::vector<std::vector<GridState>> seqs;
  std::vector<double> weights;
};

Expanded expand(const std::vector<Trajectory>& trajs, const Featurizer& feat) {
  Expanded out;
  const int n = static_cast<int>(trajs.size());
  for (const Trajectory& traj : trajs) {
    if (feat.mode == CostMode::TrajectoryDTW) {
      out.feats.push_back(feat.features(traj));
      out.seqs.push_back(traj.states);
      out.weights.push_back(1.0 / n);
    } else {
      const int L = std::max(traj.length(), 1);
      for (int t = 0; t < L; ++t) {
        out.feats.push_back(feat.features(traj.states[t]));
        out.seqs.push_back({traj.states[t]});
        out.weights.push_back(1.0 / (double(n) * L));
      }
    }
  }
  return out;
}

std::vector<Trajectory> redo_undone(const std::vector<Trajectory>& observed,
                                    const UndoMap& undo) {
  std::vector<Trajectory> out = observed;
  for (Trajectory& traj : out)
    for (GridState& s : traj.states) s = undo.apply(s);
  return out;
}

TvDConfig tiny_config(std::uint64_t seed, int iterations) {
  TvDConfig cfg;
  cfg.seed = seed;
  cfg.outer_iterations = iterations;
  cfg.rollout_batch = 4;
  cfg.eval_episodes = 4;
  cfg.error_sample_size = 40;
  cfg.divergence.inner_steps = 5;
  cfg.divergence.potential_hidden = {8};
  return cfg;
}

// Full-batch dual objective as a function of the undo map, with the observed
// trajectories held fixed.
double omega_objective(const std::vector<Trajectory>& src,
                       const std::vector<Trajectory>& observed,
                       const UndoMap& undo, const DualPotentials& pot,
                       const DivergenceSpec& div, const Featurizer& feat) {
  const Expanded e1 = expand(src, feat);
  const Expanded e2 = expand(redo_undone(observed, undo), feat);
  const auto cost = batch_ops::pairwise_costs(e1.seqs, e2.seqs);
  return wasserstein_objective(e1.feats, e2.feats, cost, pot, div.alpha,
                               e1.weights, e2.weights)
      .value;
}

}  // namespace

TEST_SUITE("tvd") {

TEST_CASE("undo family names round trip") {
  for (UndoFamily f : {UndoFamily::Linear, UndoFamily::Affine, UndoFamily::Mlp})
    CHECK(undo_family_from_name(undo_family_name(f)) == f);
  CHECK_THROWS_AS(undo_family_from_name("spline"), std::invalid_argument);
}

TEST_CASE("identity undo maps reproduce their input exactly") {
  const GridState c{3.5, 3.5};
  const UndoMap lin = UndoMap::identity_linear(c);
  const UndoMap aff = UndoMap::identity_affine(c);
  CHECK(lin.param_count() == 4);
  CHECK(aff.param_count() == 6);
  for (int x = 0; x < 8; ++x) {
    for (int y = 0; y < 8; ++y) {
      const GridState s{double(x), double(y)};
      CHECK(lin.apply(s) == s);
      CHECK(aff.apply(s) == s);
    }
  }
}

TEST_CASE("linear undo with a rotation matrix inverts the domain rotation") {
  const double theta = M_PI / 3;
  const GridState c{3.5, 3.5};
  const StateTransform rot = StateTransform::rotation(theta, c);
  UndoMap undo = UndoMap::identity_linear(c);
  undo.lin = {std::cos(theta), std::sin(theta), -std::sin(theta),
              std::cos(theta)};
  for (int x = 0; x < 8; ++x) {
    for (int y = 0; y < 8; ++y) {
      const GridState s{double(x), double(y)};
      const GridState back = undo.apply(apply_transform(rot, s));
      CHECK(back.x == doctest::Approx(s.x).epsilon(1e-12));
      CHECK(back.y == doctest::Approx(s.y).epsilon(1e-12));
    }
  }
}

TEST_CASE("undo map jacobians match finite differences") {
  Rng rng(3);
  const GridState c{3.5, 3.5};
  std::vector<UndoMap> maps;
  maps.push_back(UndoMap::identity_linear(c));
  maps.push_back(UndoMap::identity_affine(c));
  maps.push_back(UndoMap::residual_mlp(c, {8, 8}, rng));
  for (UndoMap& u : maps) {
    for (double& p : u.parameters()) p += 0.1 * rng.normal();

    for (int trial = 0; trial < 5; ++trial) {
      const GridState s{rng.uniform(-1.0, 8.0), rng.uniform(-1.0, 8.0)};
      const auto an = u.param_jacobian(s);
      const auto fd = fd_param_jacobian(u, s, 1e-6);
      REQUIRE(an.size() == fd.size());
      for (size_t k = 0; k < an.size(); ++k) check_close(an[k], fd[k], 1e-4);

      const auto in = u.input_jacobian(s);
      const double h = 1e-6;
      const GridState xp = u.apply({s.x + h, s.y}), xm = u.apply({s.x - h, s.y});
      const GridState yp = u.apply({s.x, s.y + h}), ym = u.apply({s.x, s.y - h});
      check_close(in[0], (xp.x - xm.x) / (2 * h), 1e-4);
      check_close(in[1], (yp.x - ym.x) / (2 * h), 1e-4);
      check_close(in[2], (xp.y - xm.y) / (2 * h), 1e-4);
      check_close(in[3], (yp.y - ym.y) / (2 * h), 1e-4);
    }
  }
}

TEST_CASE("undone rollouts pair observed states with their undo images") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::rotation(0.7, spec.center())};
  Rng rng(9);
  const Policy pol = Policy::random(spec, rng, {8});
  UndoMap undo = UndoMap::identity_linear(spec.center());
  undo.lin = {0.9, 0.2, -0.1, 1.1};

  const TargetBatch batch = undone_rollout_batch(prob, undo, pol, 77, 6);
  REQUIRE(batch.observed.size() == 6);
  REQUIRE(batch.undone.size() == 6);
  for (int e = 0; e < 6; ++e) {
    CHECK(batch.undone[e].actions == batch.observed[e].actions);
    CHECK(batch.undone[e].rewards == batch.observed[e].rewards);
    REQUIRE(batch.undone[e].states.size() == batch.observed[e].states.size());
    for (size_t t = 0; t < batch.observed[e].states.size(); ++t) {
      CHECK(batch.undone[e].states[t] == undo.apply(batch.observed[e].states[t]));
    }
  }

  // The observed episodes follow the published per-episode seed contract for
  // the composed sampler.
  const ActionSampler composed = [&](const GridState& obs, Rng& r) {
    return pol.sample(undo.apply(obs), r);
  };
  const auto replay = batch_ops::rollout_batch(prob.spec, prob.transform,
                                               composed, 77, "episode", 6);
  for (int e = 0; e < 6; ++e) {
    CHECK(batch.observed[e].states == replay[e].states);
    CHECK(batch.observed[e].actions == replay[e].actions);
  }
}

TEST_CASE("identity transform with identity undo leaves episodes untouched") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::identity()};
  const Policy pol = uniform_policy(spec);
  const UndoMap undo = UndoMap::identity_linear(spec.center());
  const TargetBatch batch = undone_rollout_batch(prob, undo, pol, 5, 4);
  for (int e = 0; e < 4; ++e) {
    CHECK(batch.undone[e].states == batch.observed[e].states);
  }
}

TEST_CASE("zero potentials give exactly zero transfer gradients") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::rotation(0.7, spec.center())};
  Rng rng(11);
  const Policy pol = Policy::random(spec, rng, {8});
  UndoMap undo = UndoMap::identity_linear(spec.center());

  const auto src = batch_ops::rollout_batch(
      spec, StateTransform::identity(), pol.sampler(), 1, "episode", 3);
  const TargetBatch tgt = undone_rollout_batch(prob, undo, pol, 2, 3);

  DivergenceSpec div;
  Featurizer feat{div.cost.mode, spec};
  DualPotentials pot;
  pot.h = Mlp(MlpSpec{feat.dim(), {8}, 1});
  pot.g = Mlp(MlpSpec{feat.dim(), {8}, 1});

  const auto gt = grad_theta(src, tgt, undo, pol, pot, div, feat, 0.0);
  for (double v : gt) CHECK(v == 0.0);
  const auto go = grad_omega(src, tgt, undo, pol, pot, div, feat, 0.0);
  for (double v : go) CHECK(v == 0.0);
}

TEST_CASE("reward augmentation reduces to a plain score estimator") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::rotation(0.7, spec.center())};
  Rng rng(13);
  const Policy pol = Policy::random(spec, rng, {8});
  UndoMap undo = UndoMap::identity_linear(spec.center());

  const auto src = batch_ops::rollout_batch(
      spec, StateTransform::identity(), pol.sampler(), 21, "episode", 3);
  const TargetBatch tgt = undone_rollout_batch(prob, undo, pol, 22, 3);

  DivergenceSpec div;
  Featurizer feat{div.cost.mode, spec};
  DualPotentials pot;  // zero nets: only the lambda term survives
  pot.h = Mlp(MlpSpec{feat.dim(), {8}, 1});
  pot.g = Mlp(MlpSpec{feat.dim(), {8}, 1});

  const double lambda = 2.5;
  const auto got = grad_theta(src, tgt, undo, pol, pot, div, feat, lambda);

  const int nT = static_cast<int>(tgt.undone.size());
  std::vector<double> want(pol.net.params().size(), 0.0);
  for (int e = 0; e < nT; ++e) {
    const double coeff = -lambda * tgt.observed[e].total_return() / nT;
    const Trajectory& u = tgt.undone[e];
    for (int t = 0; t < u.length(); ++t) {
      const auto lg = pol.log_prob_grad(u.states[t], u.actions[t]);
      for (size_t p = 0; p < want.size(); ++p) want[p] += coeff * lg.theta[p];
    }
  }
  REQUIRE(got.size() == want.size());
  for (size_t p = 0; p < want.size(); ++p)
    CHECK(got[p] == doctest::Approx(want[p]).epsilon(1e-9));
}

TEST_CASE("undo-map gradient matches finite differences of the objective") {
  // A uniform zero-logit policy kills the score term, leaving exactly the
  // pathwise dependence the finite difference sees.
  GridWorldSpec spec;
  spec.horizon = 10;
  TvdProblem prob{spec, StateTransform::rotation(0.7, spec.center())};
  const Policy pol = uniform_policy(spec);

  for (CostMode mode : {CostMode::StateL2, CostMode::TrajectoryDTW}) {
    CAPTURE(cost_mode_name(mode));
    DivergenceSpec div;
    div.alpha = 4.0;
    div.cost.mode = mode;
    Featurizer feat{mode, spec};

    Rng rng(17);
    UndoMap undo = UndoMap::identity_linear(spec.center());
    for (double& p : undo.parameters()) p += 0.15 * rng.normal();

    const auto src = batch_ops::rollout_batch(
        spec, StateTransform::identity(), pol.sampler(), 31, "episode", 3);
    const TargetBatch tgt = undone_rollout_batch(prob, undo, pol, 32, 3);

    DualPotentials pot = DualPotentials::random(feat.dim(), {8}, rng);
    for (double& v : pot.h.params()) v *= 0.5;
    for (double& v : pot.g.params()) v *= 0.5;
    set_output_bias(pot.h, 1.0);
    set_output_bias(pot.g, 1.5);  // keeps a mix of active and inactive pairs

    const auto an = grad_omega(src, tgt, undo, pol, pot, div, feat, 0.0);
    const double h = 1e-5;
    for (int p = 0; p < undo.param_count(); ++p) {
      UndoMap up = undo, um = undo;
      up.parameters()[p] += h;
      um.parameters()[p] -= h;
      const double fd = (omega_objective(src, tgt.observed, up, pot, div, feat) -
                         omega_objective(src, tgt.observed, um, pot, div, feat)) /
                        (2 * h);
      check_close(an[p], fd, 1e-3);
    }
  }
}

TEST_CASE("f-divergence gradients match finite differences") {
  GridWorldSpec spec;
  spec.horizon = 10;
  TvdProblem prob{spec, StateTransform::rotation(0.7, spec.center())};
  const Policy pol = uniform_policy(spec);

  for (DivergenceKind kind :
       {DivergenceKind::Chi2, DivergenceKind::TV, DivergenceKind::KL}) {
    CAPTURE(divergence_name(kind));
    Featurizer feat{CostMode::StateL2, spec};

    Rng rng(19);
    UndoMap undo = UndoMap::identity_affine(spec.center());
    for (double& p : undo.parameters()) p += 0.1 * rng.normal();
    const TargetBatch tgt = undone_rollout_batch(prob, undo, pol, 41, 3);

    Mlp g = Mlp::random(MlpSpec{feat.dim(), {8}, 1}, rng);
    for (double& v : g.params()) v *= 0.3;  // keep TV away from its clamp

    const auto grads = grad_f_div(tgt, undo, pol, g, kind, feat);

    const auto objective = [&](const UndoMap& u) {
      const Expanded e = expand(redo_undone(tgt.observed, u), feat);
      double val = 0.0;
      for (size_t j = 0; j < e.feats.size(); ++j)
        val -= e.weights[j] * f_conjugate(kind, g.forward_scalar(e.feats[j]));
      return val;
    };
    const double h = 1e-5;
    for (int p = 0; p < undo.param_count(); ++p) {
      UndoMap up = undo, um = undo;
      up.parameters()[p] += h;
      um.parameters()[p] -= h;
      const double fd = (objective(up) - objective(um)) / (2 * h);
      check_close(grads.omega[p], fd, 1e-3);
    }
  }
}

TEST_CASE("zero chi-squared potential gives exactly zero gradients") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::rotation(0.7, spec.center())};
  Rng rng(23);
  const Policy pol = Policy::random(spec, rng, {8});
  const UndoMap undo = UndoMap::identity_linear(spec.center());
  const TargetBatch tgt = undone_rollout_batch(prob, undo, pol, 43, 3);

  Featurizer feat{CostMode::TrajectoryDTW, spec};
  const Mlp g(MlpSpec{feat.dim(), {8}, 1});
  const auto grads = grad_f_div(tgt, undo, pol, g, DivergenceKind::Chi2, feat);
  for (double v : grads.theta) CHECK(v == 0.0);
  for (double v : grads.omega) CHECK(v == 0.0);
}

TEST_CASE("zero KL potential reduces to a constant-weight score gradient") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::rotation(0.7, spec.center())};
  Rng rng(29);
  const Policy pol = Policy::random(spec, rng, {8});
  UndoMap undo = UndoMap::identity_linear(spec.center());
  undo.lin = {1.1, -0.2, 0.3, 0.9};
  const TargetBatch tgt = undone_rollout_batch(prob, undo, pol, 47, 4);

  Featurizer feat{CostMode::TrajectoryDTW, spec};
  const Mlp g(MlpSpec{feat.dim(), {8}, 1});  // f*(0) = 1 for KL
  const auto grads = grad_f_div(tgt, undo, pol, g, DivergenceKind::KL, feat);

  const int nT = static_cast<int>(tgt.undone.size());
  const int P = undo.param_count();
  std::vector<double> theta(pol.net.params().size(), 0.0);
  std::vector<double> omega(P, 0.0);
  for (int e = 0; e < nT; ++e) {
    const double phi = -1.0 / nT;
    const Trajectory& u = tgt.undone[e];
    for (int t = 0; t < u.length(); ++t) {
      const auto lg = pol.log_prob_grad(u.states[t], u.actions[t]);
      for (size_t p = 0; p < theta.size(); ++p) theta[p] += phi * lg.theta[p];
      const auto jac = undo.param_jacobian(tgt.observed[e].states[t]);
      for (int p = 0; p < P; ++p)
        omega[p] += phi * (lg.state[0] * jac[p] + lg.state[1] * jac[P + p]);
    }
  }
  for (size_t p = 0; p < theta.size(); ++p)
    CHECK(grads.theta[p] == doctest::Approx(theta[p]).epsilon(1e-9));
  for (int p = 0; p < P; ++p)
    CHECK(grads.omega[p] == doctest::Approx(omega[p]).epsilon(1e-9));
}

TEST_CASE("gradient estimators reject malformed batches") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::identity()};
  Rng rng(31);
  const Policy pol = Policy::random(spec, rng, {8});
  const UndoMap undo = UndoMap::identity_linear(spec.center());
  const TargetBatch tgt = undone_rollout_batch(prob, undo, pol, 3, 2);

  DivergenceSpec div;
  Featurizer feat{div.cost.mode, spec};
  DualPotentials pot = DualPotentials::random(feat.dim(), {8}, rng);

  CHECK_THROWS_AS(grad_theta({}, tgt, undo, pol, pot, div, feat, 0.0),
                  std::invalid_argument);
  TargetBatch broken = tgt;
  broken.undone.pop_back();
  const auto src = batch_ops::rollout_batch(
      spec, StateTransform::identity(), pol.sampler(), 4, "episode", 2);
  CHECK_THROWS_AS(grad_omega(src, broken, undo, pol, pot, div, feat, 0.0),
                  std::invalid_argument);
}

TEST_CASE("frozen-policy runs never touch the policy parameters") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::rotation(M_PI / 2, spec.center())};
  Rng rng(37);
  const Policy source = Policy::random(spec, rng, {8});
  const auto before = source.net.params();

  const TvDConfig cfg = tiny_config(7, 3);
  const TvDState state = run_tvd(prob, cfg, &source, nullptr);
  CHECK(state.policy.net.params() == before);
  CHECK(state.iteration == 3);
  REQUIRE(state.history.size() == 3);
  for (int t = 0; t < 3; ++t) {
    CHECK(state.history[t].iteration == t + 1);
    CHECK(std::isfinite(state.history[t].wasserstein_estimate));
    CHECK(std::isfinite(state.history[t].undo_map_error));
    CHECK(state.history[t].target_return <= 0.0);
  }
}

TEST_CASE("resumed runs replay the remaining iterations bit for bit") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::rotation(M_PI / 2, spec.center())};
  Rng rng(41);
  const Policy source = Policy::random(spec, rng, {8});

  const TvDState full = run_tvd(prob, tiny_config(11, 6), &source, nullptr);
  const TvDState half = run_tvd(prob, tiny_config(11, 3), &source, nullptr);
  const TvDState resumed =
      run_tvd(prob, tiny_config(11, 6), &source, nullptr, &half);

  CHECK(resumed.undo.parameters() == full.undo.parameters());
  CHECK(resumed.potentials.h.params() == full.potentials.h.params());
  CHECK(resumed.potentials.g.params() == full.potentials.g.params());
  REQUIRE(resumed.history.size() == full.history.size());
  for (size_t t = 0; t < full.history.size(); ++t) {
    CHECK(resumed.history[t].iteration == full.history[t].iteration);
    CHECK(resumed.history[t].wasserstein_estimate ==
          full.history[t].wasserstein_estimate);
    CHECK(resumed.history[t].target_return == full.history[t].target_return);
    CHECK(resumed.history[t].undo_map_error == full.history[t].undo_map_error);
  }
}

TEST_CASE("checkpoint hook fires on the configured cadence and at the end") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::identity()};
  Rng rng(43);
  const Policy source = Policy::random(spec, rng, {8});

  TvDConfig cfg = tiny_config(13, 5);
  cfg.checkpoint_every = 2;
  std::vector<int> seen;
  run_tvd(prob, cfg, &source, nullptr, nullptr,
          [&seen](const TvDState& s) { seen.push_back(s.iteration); });
  CHECK(seen == std::vector<int>{2, 4, 5});
}

TEST_CASE("run configuration errors are rejected up front") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::identity()};
  Rng rng(47);
  const Policy source = Policy::random(spec, rng, {8});

  TvDConfig cfg = tiny_config(1, 2);
  CHECK_THROWS_AS(run_tvd(prob, cfg, nullptr, nullptr), std::invalid_argument);

  cfg.freeze_policy = false;
  CHECK_THROWS_AS(run_tvd(prob, cfg, &source, nullptr), std::invalid_argument);

  DemoSet bad;
  bad.trajectories.push_back(Trajectory{});
  CHECK_THROWS_AS(run_tvd(prob, cfg, &source, &bad), std::invalid_argument);

  cfg.freeze_policy = true;
  cfg.lambda = 0.5;
  cfg.divergence.kind = DivergenceKind::Chi2;
  CHECK_THROWS_AS(run_tvd(prob, cfg, &source, nullptr), std::invalid_argument);
}

TEST_CASE("f-divergence mode runs end to end") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::rotation(M_PI / 2, spec.center())};
  Rng rng(53);
  const Policy source = Policy::random(spec, rng, {8});

  TvDConfig cfg = tiny_config(17, 3);
  cfg.divergence.kind = DivergenceKind::Chi2;
  cfg.divergence.cost.mode = CostMode::StateL2;
  const TvDState state = run_tvd(prob, cfg, &source, nullptr);
  REQUIRE(state.history.size() == 3);
  for (const MetricRow& row : state.history)
    CHECK(std::isfinite(row.wasserstein_estimate));
}

TEST_CASE("residual-mlp undo family trains without leaving identity init") {
  GridWorldSpec spec;
  TvdProblem prob{spec, StateTransform::rotation(M_PI / 2, spec.center())};
  Rng rng(59);
  const Policy source = Policy::random(spec, rng, {8});

  TvDConfig cfg = tiny_config(19, 3);
  cfg.family = UndoFamily::Mlp;
  cfg.undo_hidden = {8};
  const TvDState state = run_tvd(prob, cfg, &source, nullptr);
  CHECK(state.undo.family == UndoFamily::Mlp);
  CHECK(state.undo.net.params_finite());

  // The map must have moved: gradients flow into the residual net.
  Rng init_rng(derive_seed(19, "undo-init"));
  const UndoMap fresh =
      UndoMap::residual_mlp(spec.center(), {8}, init_rng);
  CHECK(state.undo.net.params() != fresh.net.params());
}

}  // TEST_SUITE
