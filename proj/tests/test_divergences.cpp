#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "undomap/batch_ops.hpp"
#include "undomap/divergences.hpp"
#include "undomap/grid.hpp"
#include "undomap/oracles.hpp"
#include "undomap/rng.hpp"

using namespace undomap;

namespace {

Trajectory straight_line(int steps) {
  Trajectory t;
  for (int i = 0; i <= steps; ++i) t.states.push_back({double(i), 0});
  t.actions.assign(steps, Action::Right);
  t.rewards.assign(steps, -1.0);
  return t;
}

SamplePool point_pool(const std::vector<GridState>& pts,
                      const std::vector<double>& weights,
                      const Featurizer& feat) {
  SamplePool pool = make_state_pool(pts, feat);
  pool.weights = weights;
  return pool;
}

}  // namespace

TEST_SUITE("divergences") {

TEST_CASE("featurizer pads with the last state and encodes length") {
  Featurizer feat;
  feat.mode = CostMode::TrajectoryDTW;
  feat.grid = GridWorldSpec{};
  CHECK(feat.dim() == 2 * 50 + 1);

  // Full-length episode: every state is its own slot, length feature 1.
  Trajectory full = straight_line(50);
  const auto vf = feat.features(full);
  REQUIRE(int(vf.size()) == feat.dim());
  CHECK(vf.back() == 1.0);

  // Length-1 episode: one real state then 49 repeats, length feature 0.02.
  Trajectory one = straight_line(1);
  const auto v1 = feat.features(one);
  CHECK(v1.back() == doctest::Approx(0.02).epsilon(1e-12));
  const GridState norm = normalize_state(feat.grid, one.states[0]);
  for (int k = 0; k < 50; ++k) {
    CHECK(v1[2 * k] == norm.x);
    CHECK(v1[2 * k + 1] == norm.y);
  }

  // Equal state sequences give identical features.
  Trajectory same = straight_line(1);
  CHECK(feat.features(same) == feat.features(one));

  Featurizer state_feat;
  state_feat.mode = CostMode::StateL2;
  state_feat.grid = GridWorldSpec{};
  CHECK(state_feat.dim() == 2);
  const auto vs = state_feat.features(GridState{7, 0});
  CHECK(vs == std::vector<double>{1.0, -1.0});
}

TEST_CASE("dual objective vanishes for zero and cancelling potentials") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  const std::vector<GridState> xs{{0, 0}, {1, 2}, {5, 5}};
  const std::vector<GridState> ys{{3, 3}, {7, 0}};
  const SamplePool p1 = make_state_pool(xs, feat);
  const SamplePool p2 = make_state_pool(ys, feat);
  const auto cost = batch_ops::pairwise_costs(p1.seqs, p2.seqs);

  DualPotentials pot;
  pot.h = Mlp(MlpSpec{2, {8}, 1});
  pot.g = Mlp(MlpSpec{2, {8}, 1});
  const auto zero =
      wasserstein_objective(p1.feats, p2.feats, cost, pot, 10.0);
  CHECK(zero.value == 0.0);
  CHECK(zero.hinge_violation_rate == 0.0);

  set_output_bias(pot.h, 4.0);
  set_output_bias(pot.g, -4.0);
  const auto cancel =
      wasserstein_objective(p1.feats, p2.feats, cost, pot, 10.0);
  CHECK(cancel.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("weighted pools compute exact expectations") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  const std::vector<GridState> xs{{0, 0}, {4, 0}};
  const std::vector<GridState> ys{{0, 3}, {4, 3}};
  const std::vector<double> w1{0.3, 0.7}, w2{0.9, 0.1};
  const SamplePool p1 = point_pool(xs, w1, feat);
  const SamplePool p2 = point_pool(ys, w2, feat);
  const auto cost = batch_ops::pairwise_costs(p1.seqs, p2.seqs);

  Rng rng(3);
  DualPotentials pot = DualPotentials::random(feat.dim(), {8}, rng);
  const double alpha = 7.0;
  const auto est = wasserstein_objective(p1.feats, p2.feats, cost, pot, alpha,
                                         p1.weights, p2.weights);

  double expect = 0.0;
  for (int i = 0; i < 2; ++i)
    expect += w1[i] * pot.h.forward_scalar(p1.feats[i]);
  for (int j = 0; j < 2; ++j)
    expect += w2[j] * pot.g.forward_scalar(p2.feats[j]);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double margin = pot.h.forward_scalar(p1.feats[i]) +
                            pot.g.forward_scalar(p2.feats[j]) -
                            cost[i * 2 + j];
      if (margin > 0) expect -= alpha * w1[i] * w2[j] * margin;
    }
  CHECK(est.value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("ascent increases the frozen objective below the kink") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  const SamplePool p1 = make_state_pool({{0, 0}}, feat);
  const SamplePool p2 = make_state_pool({{3, 4}}, feat);
  const auto cost = batch_ops::pairwise_costs(p1.seqs, p2.seqs);
  REQUIRE(cost[0] == 5.0);

  DivergenceSpec spec;
  spec.alpha = 10.0;
  spec.potential_lr = 1e-3;
  spec.inner_steps = 1;
  spec.batch_size = 1;

  Rng rng(5);
  DualPotentials pot = DualPotentials::random(2, {16}, rng);
  double prev = wasserstein_objective(p1.feats, p2.feats, cost, pot,
                                      spec.alpha)
                    .value;
  for (int step = 0; step < 200; ++step) {
    update_potentials(p1, p2, cost, pot, spec, rng);
    const double cur =
        wasserstein_objective(p1.feats, p2.feats, cost, pot, spec.alpha).value;
    if (cur > 4.5) break;  // near the kink the one-sided slope flips
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("trained potentials recover the distance between two points") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  const SamplePool p1 = make_state_pool({{0, 0}}, feat);
  const SamplePool p2 = make_state_pool({{3, 4}}, feat);
  const auto cost = batch_ops::pairwise_costs(p1.seqs, p2.seqs);

  DivergenceSpec spec;
  spec.alpha = 10.0;
  spec.potential_lr = 1e-3;
  spec.inner_steps = 2000;
  spec.batch_size = 4;

  Rng rng(7);
  DualPotentials pot = DualPotentials::random(2, {64, 64}, rng);
  update_potentials(p1, p2, cost, pot, spec, rng);
  const double value =
      wasserstein_objective(p1.feats, p2.feats, cost, pot, spec.alpha).value;
  CHECK(std::abs(value - 5.0) <= 0.5);
}

TEST_CASE("self-distance of a single point trains to zero") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  const SamplePool p = make_state_pool({{2, 5}}, feat);
  const auto cost = batch_ops::pairwise_costs(p.seqs, p.seqs);
  REQUIRE(cost[0] == 0.0);

  DivergenceSpec spec;
  spec.alpha = 10.0;
  spec.potential_lr = 1e-5;
  spec.inner_steps = 2000;
  spec.batch_size = 2;

  Rng rng(11);
  DualPotentials pot;
  pot.h = Mlp(MlpSpec{2, {64, 64}, 1});
  pot.g = Mlp(MlpSpec{2, {64, 64}, 1});
  update_potentials(p, p, cost, pot, spec, rng);
  const double value =
      wasserstein_objective(p.feats, p.feats, cost, pot, spec.alpha).value;
  CHECK(std::abs(value) <= 1e-3);
}

TEST_CASE("potential updates are deterministic") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  const SamplePool p1 = make_state_pool({{0, 0}, {1, 1}, {2, 0}}, feat);
  const SamplePool p2 = make_state_pool({{5, 5}, {6, 2}}, feat);
  const auto cost = batch_ops::pairwise_costs(p1.seqs, p2.seqs);

  DivergenceSpec spec;
  spec.inner_steps = 50;

  Rng ra(13), rb(13);
  DualPotentials pa = DualPotentials::random(2, {16}, ra);
  DualPotentials pb = DualPotentials::random(2, {16}, rb);
  update_potentials(p1, p2, cost, pa, spec, ra);
  update_potentials(p1, p2, cost, pb, spec, rb);
  CHECK(pa.h.params() == pb.h.params());
  CHECK(pa.g.params() == pb.g.params());
}

TEST_CASE("warm start pins constant nets to half the cost scale") {
  DualPotentials pot;
  pot.h = Mlp(MlpSpec{2, {8}, 1});
  pot.g = Mlp(MlpSpec{2, {8}, 1});
  warm_start(pot, 6.0);
  const std::vector<double> x{0.2, -0.4};
  CHECK(pot.h.forward_scalar(x) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(pot.g.forward_scalar(x) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("conjugates match the pinned closed forms") {
  CHECK(f_conjugate(DivergenceKind::Chi2, 0.0) == 0.0);
  CHECK(f_conjugate(DivergenceKind::Chi2, 2.0) == doctest::Approx(3.0));
  CHECK(f_conjugate(DivergenceKind::TV, 0.3) == doctest::Approx(0.3));
  CHECK(f_conjugate(DivergenceKind::KL, 0.0) == doctest::Approx(1.0));
  CHECK(f_conjugate(DivergenceKind::KL, 1.0) ==
        doctest::Approx(std::exp(1.0)));
}

TEST_CASE("conjugate derivatives match finite differences") {
  Rng rng(17);
  for (DivergenceKind kind :
       {DivergenceKind::Chi2, DivergenceKind::TV, DivergenceKind::KL}) {
    for (int i = 0; i < 20; ++i) {
      // The TV conjugate is flat outside [-1/2, 1/2]; its derivative is only
      // meaningful strictly inside, which is where training keeps it.
      const double y = kind == DivergenceKind::TV ? rng.uniform(-0.45, 0.45)
                                                  : rng.uniform(-2.0, 2.0);
      const double h = 1e-6;
      const double fd =
          (f_conjugate(kind, y + h) - f_conjugate(kind, y - h)) / (2 * h);
      const double an = f_conjugate_prime(kind, y);
      CHECK(std::abs(an - fd) <=
            1e-4 * std::max({std::abs(an), std::abs(fd), 1e-9}));
    }
  }
}

TEST_CASE("zero potential gives the pinned f-divergence baselines") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  const SamplePool p1 = make_state_pool({{0, 0}, {1, 1}}, feat);
  const SamplePool p2 = make_state_pool({{2, 2}, {3, 3}}, feat);
  Mlp g(MlpSpec{2, {8}, 1});

  CHECK(f_div_objective(p1.feats, p2.feats, g, DivergenceKind::Chi2) == 0.0);
  CHECK(f_div_objective(p1.feats, p2.feats, g, DivergenceKind::KL) ==
        doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(divergence_report_value(DivergenceKind::KL, -1.0) ==
        doctest::Approx(0.0));
  CHECK(divergence_report_value(DivergenceKind::Chi2, 0.4) ==
        doctest::Approx(0.4));
}

TEST_CASE("TV objective saturates and its update cancels on identical data") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  const SamplePool p = make_state_pool({{1, 1}, {4, 2}, {6, 6}}, feat);

  Rng rng(41);
  Mlp g = Mlp::random(MlpSpec{2, {8}, 1}, rng);
  set_output_bias(g, 10.0);  // clamps to 1/2 on both sides of the objective
  const double obj = f_div_objective(p.feats, p.feats, g, DivergenceKind::TV);
  CHECK(obj == doctest::Approx(0.0).epsilon(1e-12));

  // Unit conjugate slope: on a single identical pair the two gradient
  // contributions cancel exactly and the update is a bitwise no-op.
  const std::vector<std::vector<double>> row{p.feats[0]};
  const auto before = g.params();
  update_f_potential(row, row, g, DivergenceKind::TV, 1e-2);
  CHECK(g.params() == before);
}

TEST_CASE("f-potential update matches finite differences of the objective") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  const SamplePool p1 = make_state_pool({{0, 0}, {2, 1}, {5, 4}}, feat);
  const SamplePool p2 = make_state_pool({{1, 3}, {6, 6}}, feat);

  Rng rng(23);
  for (DivergenceKind kind :
       {DivergenceKind::Chi2, DivergenceKind::TV, DivergenceKind::KL}) {
    Mlp g = Mlp::random(MlpSpec{2, {8}, 1}, rng);
    // Outputs stay inside (-1/2, 1/2) at this scale, so the TV clamp is
    // inactive and the objective is differentiable.
    for (double& v : g.params()) v *= 0.1;

    const double eta = 1e-6;
    Mlp stepped = g;
    update_f_potential(p1.feats, p2.feats, stepped, kind, eta);

    const double h = 1e-5;
    for (int idx = 0; idx < g.param_count(); idx += 5) {
      Mlp plus = g, minus = g;
      plus.params()[idx] += h;
      minus.params()[idx] -= h;
      const double fd = (f_div_objective(p1.feats, p2.feats, plus, kind) -
                         f_div_objective(p1.feats, p2.feats, minus, kind)) /
                        (2 * h);
      const double an = (stepped.params()[idx] - g.params()[idx]) / eta;
      CHECK(std::abs(an - fd) <=
            1e-4 * std::max({std::abs(an), std::abs(fd), 1e-7}));
    }
  }
}

TEST_CASE("KL potential on identical distributions reports near zero") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  const std::vector<GridState> pts{{0, 0}, {3, 3}, {6, 1}};
  const SamplePool p = make_state_pool(pts, feat);

  DivergenceSpec spec;
  spec.kind = DivergenceKind::KL;
  spec.potential_lr = 1e-3;
  spec.inner_steps = 2000;
  spec.batch_size = 3;

  Rng rng(29);
  Mlp g = Mlp::random(MlpSpec{2, {16}, 1}, rng);
  train_f_potential(p, p, g, spec, rng);
  const double report = divergence_report_value(
      DivergenceKind::KL, f_div_objective(p.feats, p.feats, g,
                                          DivergenceKind::KL));
  CHECK(report <= 0.01);
  CHECK(report >= -0.2);
}

TEST_CASE("trained chi-squared estimate brackets the closed form") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  const std::vector<GridState> atoms{{0, 0}, {2, 0}, {4, 0}, {6, 0}};
  const std::vector<double> pw{0.4, 0.3, 0.2, 0.1};
  const std::vector<double> qw{0.1, 0.2, 0.3, 0.4};
  const SamplePool p = point_pool(atoms, pw, feat);
  const SamplePool q = point_pool(atoms, qw, feat);
  const double truth = oracle::chi2_exact(pw, qw);

  DivergenceSpec spec;
  spec.kind = DivergenceKind::Chi2;
  spec.potential_lr = 1e-2;
  spec.inner_steps = 4000;
  spec.batch_size = 8;

  Rng rng(31);
  Mlp g = Mlp::random(MlpSpec{2, {64, 64}, 1}, rng);
  train_f_potential(p, q, g, spec, rng);
  const double est = divergence_report_value(
      DivergenceKind::Chi2,
      f_div_objective(p.feats, q.feats, g, DivergenceKind::Chi2, p.weights,
                      q.weights));
  CHECK(est <= truth + 0.05);
  CHECK(est >= 0.9 * truth);
}

TEST_CASE("weighted pool sampling respects the weights") {
  Featurizer feat;
  feat.mode = CostMode::StateL2;
  feat.grid = GridWorldSpec{};
  SamplePool pool = point_pool({{0, 0}, {1, 0}}, {0.9, 0.1}, feat);
  Rng rng(37);
  int first = 0, total = 0;
  for (int rep = 0; rep < 500; ++rep) {
    for (int idx : sample_pool_indices(pool, 10, rng)) {
      first += idx == 0;
      ++total;
    }
  }
  CHECK(total == 5000);
  CHECK(std::abs(first / double(total) - 0.9) < 0.02);
}

}  // TEST_SUITE
