#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>

#include "undomap/config.hpp"

using namespace undomap;

TEST_SUITE("config") {

TEST_CASE("default experiment is the rotated-grid wasserstein setup") {
  const ExperimentConfig cfg = default_config();
  CHECK(cfg.transform.kind == TransformKind::Rotation);
  CHECK(cfg.transform.angle == doctest::Approx(std::acos(-1.0) / 2.0));
  CHECK(cfg.transform.center.x == 3.5);
  CHECK(cfg.transform.center.y == 3.5);
  CHECK(cfg.seed == 1);
  CHECK(cfg.output_dir == "out");
  CHECK(cfg.source_regime == SourceRegime::HighEntropyOptimal);

  CHECK(cfg.divergence.kind == DivergenceKind::Wasserstein);
  CHECK(cfg.divergence.alpha == 10.0);
  CHECK(cfg.divergence.cost.mode == CostMode::TrajectoryDTW);
  CHECK(cfg.divergence.potential_lr == 1e-3);
  CHECK(cfg.divergence.inner_steps == 50);
  CHECK(cfg.divergence.batch_size == 32);
  CHECK(cfg.divergence.potential_hidden == std::vector<int>{64, 64});

  CHECK(cfg.tvd.family == UndoFamily::Linear);
  CHECK(cfg.tvd.freeze_policy);
  CHECK(cfg.tvd.outer_iterations == 500);
  CHECK(cfg.tvd.rollout_batch == 16);
  CHECK(cfg.tvd.lambda == 0.0);
  CHECK(cfg.tvd.eval_episodes == 16);
  CHECK(cfg.tvd.error_sample_size == 1000);
  CHECK(cfg.tvd.checkpoint_every == 50);
  CHECK(cfg.tvd.grad_clip == 10.0);
}

TEST_CASE("serialized text reproduces the config byte for byte") {
  const ExperimentConfig cfg = default_config();
  const std::string text = config_to_text(cfg);
  const ExperimentConfig parsed = config_from_text(text);
  CHECK(config_to_text(parsed) == text);
}

TEST_CASE("every field including awkward doubles survives a round trip") {
  ExperimentConfig cfg = default_config();
  cfg.seed = 18446744073709551615ull;
  cfg.output_dir = "runs/exp_03";
  cfg.source_regime = SourceRegime::LowEntropyOptimal;
  cfg.gridworld.width = 5;
  cfg.gridworld.height = 9;
  cfg.gridworld.goal = {4.0, 8.0};
  cfg.gridworld.horizon = 33;
  cfg.gridworld.step_reward = -0.125;
  cfg.transform.angle = std::acos(-1.0) / 3.0;
  cfg.transform.center = {2.0, 4.0};
  cfg.divergence.kind = DivergenceKind::KL;
  cfg.divergence.alpha = 1.0 / 3.0;
  cfg.divergence.cost.mode = CostMode::StateL2;
  cfg.divergence.potential_hidden = {};
  cfg.tvd.family = UndoFamily::Mlp;
  cfg.tvd.freeze_policy = false;
  cfg.tvd.outer_lr = 0.0063;
  cfg.tvd.lambda = 0.7;
  cfg.tvd.undo_hidden = {128};

  const ExperimentConfig back = config_from_text(config_to_text(cfg));
  CHECK(back.seed == cfg.seed);
  CHECK(back.output_dir == cfg.output_dir);
  CHECK(back.source_regime == cfg.source_regime);
  CHECK(back.gridworld.width == 5);
  CHECK(back.gridworld.height == 9);
  CHECK(back.gridworld.goal == cfg.gridworld.goal);
  CHECK(back.gridworld.horizon == 33);
  CHECK(back.gridworld.step_reward == -0.125);
  CHECK(back.transform.angle == cfg.transform.angle);
  CHECK(back.transform.center == cfg.transform.center);
  CHECK(back.divergence.kind == DivergenceKind::KL);
  CHECK(back.divergence.alpha == cfg.divergence.alpha);
  CHECK(back.divergence.cost.mode == CostMode::StateL2);
  CHECK(back.divergence.potential_hidden.empty());
  CHECK(back.tvd.family == UndoFamily::Mlp);
  CHECK_FALSE(back.tvd.freeze_policy);
  CHECK(back.tvd.outer_lr == 0.0063);
  CHECK(back.tvd.lambda == 0.7);
  CHECK(back.tvd.undo_hidden == std::vector<int>{128});
}

TEST_CASE("all enum-valued fields round trip through their names") {
  for (DivergenceKind kind : {DivergenceKind::Wasserstein, DivergenceKind::Chi2,
                              DivergenceKind::TV, DivergenceKind::KL}) {
    ExperimentConfig cfg = default_config();
    cfg.divergence.kind = kind;
    CHECK(config_from_text(config_to_text(cfg)).divergence.kind == kind);
  }
  for (SourceRegime regime :
       {SourceRegime::LowEntropyOptimal, SourceRegime::HighEntropyOptimal,
        SourceRegime::HighEntropySuboptimal}) {
    ExperimentConfig cfg = default_config();
    cfg.source_regime = regime;
    CHECK(config_from_text(config_to_text(cfg)).source_regime == regime);
  }
}

TEST_CASE("comments and blank lines are skipped, unknown keys are not") {
  const ExperimentConfig cfg = config_from_text(
      "# experiment notes\n"
      "\n"
      "config_version = 1\n"
      "   seed   =   99   \n");
  CHECK(cfg.seed == 99);
  CHECK(cfg.transform.kind == TransformKind::Identity);  // bare defaults

  CHECK_THROWS_AS(config_from_text("config_version = 1\nbogus_key = 3\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_text("config_version = 1\nseed\n"),
                  std::invalid_argument);
}

TEST_CASE("duplicate keys and version problems are rejected") {
  CHECK_THROWS_AS(config_from_text("config_version = 1\nseed = 2\nseed = 3\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_text("seed = 2\n"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_text("config_version = 99\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_text("config_version = banana\n"),
                  std::invalid_argument);
}

TEST_CASE("override failures name the offending key") {
  ExperimentConfig cfg = default_config();
  CHECK_THROWS_WITH_AS(apply_override(cfg, "tvd.outer_lr", "abc"),
                       "config key 'tvd.outer_lr': not a number: 'abc'",
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(apply_override(cfg, "no.such.key", "1"),
                       "config: unknown key 'no.such.key'",
                       std::invalid_argument);

  apply_override(cfg, "tvd.outer_lr", "0.25");
  CHECK(cfg.tvd.outer_lr == 0.25);
  apply_override(cfg, "divergence.potential_hidden", "16,8");
  CHECK(cfg.divergence.potential_hidden == std::vector<int>{16, 8});
}

TEST_CASE("the tvd view carries the shared divergence and seed") {
  ExperimentConfig cfg = default_config();
  cfg.seed = 1234;
  cfg.divergence.alpha = 99.0;
  cfg.divergence.kind = DivergenceKind::Chi2;
  cfg.tvd.seed = 7;  // stale; the experiment seed wins
  cfg.tvd.outer_lr = 0.002;

  const TvDConfig t = tvd_config(cfg);
  CHECK(t.seed == 1234);
  CHECK(t.divergence.alpha == 99.0);
  CHECK(t.divergence.kind == DivergenceKind::Chi2);
  CHECK(t.outer_lr == 0.002);
  CHECK(t.outer_iterations == cfg.tvd.outer_iterations);
}

}  // TEST_SUITE
