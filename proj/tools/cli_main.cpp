// Command-line driver: stage subcommands for the transfer experiments plus
// the oracle toolkit the test suite calls for reference values.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "undomap/batch_ops.hpp"
#include "undomap/config.hpp"
#include "undomap/io.hpp"
#include "undomap/metrics.hpp"
#include "undomap/oracles.hpp"
#include "undomap/tvd.hpp"

namespace {

using json = nlohmann::json;
using namespace undomap;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg = args.config_path.empty()
                             ? default_config()
                             : config_from_text(read_file(args.config_path));
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    }
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (const char* env = std::getenv("UNDOMAP_OUTPUT_DIR")) {
    if (*env != '\0') cfg.output_dir = env;
  }
  return cfg;
}

std::filesystem::path out_path(const ExperimentConfig& cfg,
                               const std::string& name) {
  const std::filesystem::path p(name);
  return p.is_absolute() ? p : std::filesystem::path(cfg.output_dir) / p;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* opt = cmd->add_option("--config", args.config_path,
                              "experiment config file (key = value lines)");
  if (config_required) opt->required();
  cmd->add_option("--set", args.overrides,
                  "override a config key, e.g. --set tvd.outer_lr=1e-3");
}

// ---------------------------------------------------------------------------
// train-source

void run_train_source(const CommonArgs& common, const std::string& out_name) {
  const ExperimentConfig cfg = load_config(common);
  const auto trained = train_source(cfg.gridworld, cfg.source_regime,
                                    derive_seed(cfg.seed, "source-training"));
  std::cout << "regime: " << regime_name(cfg.source_regime) << "\n"
            << "iterations: " << trained.iterations_run << "\n"
            << "goal_rate: " << fmt(trained.eval.goal_rate) << "\n"
            << "mean_return: " << fmt(trained.eval.mean_return) << "\n"
            << "mean_entropy: " << fmt(trained.eval.mean_entropy) << "\n"
            << "gates: " << regime_gates_text(cfg.source_regime) << " (met)\n";
  const PolicyCheckpoint ckpt{trained.policy, cfg.source_regime, trained.eval,
                              cfg.seed};
  const auto path = out_path(cfg, out_name);
  write_file(path, policy_checkpoint_bytes(ckpt));
  std::cout << "checkpoint: " << path.string() << "\n";
}

// ---------------------------------------------------------------------------
// collect-demos

void run_collect_demos(const CommonArgs& common, const std::string& policy_path,
                       bool use_expert, int n, const std::string& out_name) {
  if (n < 1) throw std::invalid_argument("collect-demos: --n must be >= 1");
  const ExperimentConfig cfg = load_config(common);
  ActionSampler sampler;
  std::string policy_id;
  Policy loaded_policy;  // keeps the sampler's referent alive
  if (use_expert) {
    sampler = edge_expert(cfg.gridworld);
    policy_id = "edge-expert";
  } else {
    if (policy_path.empty()) {
      throw std::invalid_argument(
          "collect-demos: pass --policy <checkpoint> or --expert");
    }
    loaded_policy = policy_checkpoint_from_bytes(read_file(policy_path)).policy;
    sampler = loaded_policy.sampler();
    policy_id = std::filesystem::path(policy_path).filename().string();
  }
  const auto demos = batch_ops::rollout_batch(
      cfg.gridworld, StateTransform::identity(), sampler,
      derive_seed(cfg.seed, "demos"), "episode", n);
  TrajectoryFileData data{cfg.gridworld, StateTransform::identity(), policy_id,
                          cfg.seed, demos};
  const auto path = out_path(cfg, out_name);
  write_file(path, trajectory_file_to_text(data));
  double mean_return = 0.0;
  for (const auto& t : demos) mean_return += t.total_return() / n;
  std::cout << "episodes: " << n << "\n"
            << "mean_return: " << fmt(mean_return) << "\n"
            << "file: " << path.string() << "\n";
}

// ---------------------------------------------------------------------------
// run-tvd

void write_heatmap(const ExperimentConfig& cfg, const std::string& stem,
                   const std::vector<Trajectory>& episodes,
                   const StateTransform& frame) {
  const auto map = render_heatmap(episodes, cfg.gridworld, frame);
  write_file(out_path(cfg, stem + ".svg"), heatmap_svg(map));
  write_file(out_path(cfg, stem + ".csv"), heatmap_counts_csv(map));
}

void run_run_tvd(const CommonArgs& common, const std::string& source_path,
                 const std::string& resume_path, const std::string& out_name) {
  const ExperimentConfig cfg = load_config(common);
  const TvdProblem prob{cfg.gridworld, cfg.transform};
  const TvDConfig tcfg = tvd_config(cfg);

  Policy source_policy;
  DemoSet demos;
  const std::string source_bytes = read_file(source_path);
  if (tcfg.freeze_policy) {
    try {
      source_policy = policy_checkpoint_from_bytes(source_bytes).policy;
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(
          "run-tvd: freeze_policy=true needs a policy checkpoint as --source (" +
          std::string(e.what()) + ")");
    }
  } else {
    try {
      demos.trajectories = trajectory_file_from_text(source_bytes).trajectories;
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(
          "run-tvd: freeze_policy=false needs a trajectory file as --source (" +
          std::string(e.what()) + ")");
    }
  }

  TvDState resume_state;
  const TvDState* resume = nullptr;
  if (!resume_path.empty()) {
    resume_state = tvd_checkpoint_from_bytes(read_file(resume_path));
    resume = &resume_state;
  }

  const auto ckpt_path = out_path(cfg, out_name);
  const CheckpointHook hook = [&](const TvDState& s) {
    write_file(ckpt_path, tvd_checkpoint_bytes(s));
  };
  const TvDState final_state =
      run_tvd(prob, tcfg, tcfg.freeze_policy ? &source_policy : nullptr,
              tcfg.freeze_policy ? nullptr : &demos, resume, hook);
  write_file(ckpt_path, tvd_checkpoint_bytes(final_state));
  write_file(out_path(cfg, "metrics.csv"), metrics_to_csv(final_state.history));

  // Render panels: source behavior, composed behavior in the target frame,
  // and the same episodes pulled back through the learned map.
  std::vector<Trajectory> source_eps;
  if (tcfg.freeze_policy) {
    source_eps = batch_ops::rollout_batch(
        cfg.gridworld, StateTransform::identity(), source_policy.sampler(),
        derive_seed(cfg.seed, "render-source"), "episode", tcfg.eval_episodes);
  } else {
    source_eps = demos.trajectories;
  }
  write_heatmap(cfg, "heatmap_source", source_eps, StateTransform::identity());
  const TargetBatch render_batch = undone_rollout_batch(
      prob, final_state.undo, final_state.policy,
      derive_seed(cfg.seed, "render-target"), tcfg.eval_episodes);
  write_heatmap(cfg, "heatmap_target", render_batch.observed, cfg.transform);
  write_heatmap(cfg, "heatmap_undone", render_batch.undone,
                StateTransform::identity());

  if (!final_state.history.empty()) {
    const auto& last = final_state.history.back();
    std::cout << "iterations: " << last.iteration << "\n"
              << "wasserstein_estimate: " << fmt(last.wasserstein_estimate) << "\n"
              << "target_return: " << fmt(last.target_return) << "\n"
              << "undo_map_error: " << fmt(last.undo_map_error) << "\n";
  }
  std::cout << "checkpoint: " << ckpt_path.string() << "\n";
}

// ---------------------------------------------------------------------------
// evaluate

void run_evaluate(const CommonArgs& common, const std::string& policy_path,
                  const std::string& tvd_path, int episodes) {
  if (episodes < 1) throw std::invalid_argument("evaluate: --episodes must be >= 1");
  const ExperimentConfig cfg = load_config(common);
  if (policy_path.empty() && tvd_path.empty()) {
    throw std::invalid_argument("evaluate: pass --policy and/or --tvd");
  }
  Policy pol;
  StateMap undo;
  TvDState tvd_state;
  if (!tvd_path.empty()) {
    tvd_state = tvd_checkpoint_from_bytes(read_file(tvd_path));
    pol = tvd_state.policy;
    undo = tvd_state.undo.fn();
  }
  if (!policy_path.empty()) {
    pol = policy_checkpoint_from_bytes(read_file(policy_path)).policy;
  }
  const auto eval =
      evaluate_policy(cfg.gridworld, cfg.transform, pol, undo, episodes,
                      derive_seed(cfg.seed, "evaluate"));
  std::cout << "episodes: " << episodes << "\n"
            << "goal_rate: " << fmt(eval.goal_rate) << "\n"
            << "mean_return: " << fmt(eval.mean_return) << "\n"
            << "mean_entropy: " << fmt(eval.mean_entropy) << "\n";
}

// ---------------------------------------------------------------------------
// render

void run_render(const CommonArgs& common, const std::string& traj_path,
                const std::string& out_stem) {
  const ExperimentConfig cfg = load_config(common);
  const auto data = trajectory_file_from_text(read_file(traj_path));
  const auto map = render_heatmap(data.trajectories, data.grid, data.transform);
  write_file(out_path(cfg, out_stem + ".svg"), heatmap_svg(map));
  write_file(out_path(cfg, out_stem + ".csv"), heatmap_counts_csv(map));
  std::cout << "episodes: " << data.trajectories.size() << "\n"
            << "svg: " << out_path(cfg, out_stem + ".svg").string() << "\n";
}

// ---------------------------------------------------------------------------
// oracle subtools

json read_json_input(const std::string& in_path) {
  if (!in_path.empty()) return json::parse(read_file(in_path));
  std::stringstream buf;
  buf << std::cin.rdbuf();
  if (buf.str().empty()) {
    throw std::invalid_argument("oracle: provide --in <file> or JSON on stdin");
  }
  return json::parse(buf.str());
}

std::vector<GridState> parse_points(const json& arr, const char* what) {
  std::vector<GridState> out;
  for (const auto& p : arr) {
    if (!p.is_array() || p.size() != 2) {
      throw std::invalid_argument(std::string("oracle: ") + what +
                                  " must be [x, y] pairs");
    }
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

void oracle_ot_lp(const std::string& in_path) {
  const json in = read_json_input(in_path);
  const auto points1 = parse_points(in.at("points1"), "points1");
  const auto points2 = parse_points(in.at("points2"), "points2");
  std::vector<double> w1 = in.at("weights1").get<std::vector<double>>();
  std::vector<double> w2 = in.at("weights2").get<std::vector<double>>();
  if (points1.size() > 12 || points2.size() > 12) {
    throw std::invalid_argument(
        "oracle ot-lp: supports are limited to 12 points per side");
  }
  if (w1.size() != points1.size() || w2.size() != points2.size()) {
    throw std::invalid_argument("oracle ot-lp: weight/point count mismatch");
  }
  const int n1 = static_cast<int>(points1.size());
  const int n2 = static_cast<int>(points2.size());
  std::vector<double> cost(static_cast<size_t>(n1) * n2);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      cost[static_cast<size_t>(i) * n2 + j] = state_cost(points1[i], points2[j]);
    }
  }
  const auto res = oracle::exact_ot(cost, n1, n2, w1, w2);
  json out{{"value", res.value}, {"u", res.u}, {"v", res.v}};
  std::cout << out.dump() << "\n";
}

void oracle_dtw_brute(const std::string& in_path) {
  const json in = read_json_input(in_path);
  const auto t1 = parse_points(in.at("t1"), "t1");
  const auto t2 = parse_points(in.at("t2"), "t2");
  if (t1.size() > 10 || t2.size() > 10) {
    throw std::invalid_argument(
        "oracle dtw-brute: sequence lengths are limited to 10");
  }
  if (t1.empty() || t2.empty()) {
    throw std::invalid_argument("oracle dtw-brute: sequences must be nonempty");
  }
  json out{{"distance", oracle::dtw_brute_force(t1, t2)}};
  std::cout << out.dump() << "\n";
}

void oracle_bfs(const GridWorldSpec& spec) {
  json out{{"steps", oracle::bfs_shortest_steps(spec)}};
  std::cout << out.dump() << "\n";
}

void oracle_fdiv_exact(const std::string& in_path) {
  const json in = read_json_input(in_path);
  const std::string kind = in.at("kind").get<std::string>();
  const std::vector<double> p = in.at("p").get<std::vector<double>>();
  const std::vector<double> q = in.at("q").get<std::vector<double>>();
  double value = 0.0;
  if (kind == "chi2") {
    value = oracle::chi2_exact(p, q);
  } else if (kind == "tv") {
    value = oracle::tv_exact(p, q);
  } else if (kind == "kl") {
    value = oracle::kl_exact(p, q);
  } else {
    throw std::invalid_argument("oracle fdiv-exact: kind must be chi2, tv, or kl");
  }
  json out{{"kind", kind}, {"value", value}};
  std::cout << out.dump() << "\n";
}

void oracle_enum_mdp() {
  const GridWorldSpec spec = oracle::toy_mdp();
  const auto leaves = oracle::enumerate_rollouts(
      spec, StateTransform::identity(),
      [](const GridState&) { return std::array<double, 4>{0.25, 0.25, 0.25, 0.25}; });
  double total_prob = 0.0, mean_return = 0.0;
  for (const auto& leaf : leaves) {
    total_prob += leaf.prob;
    mean_return += leaf.prob * leaf.traj.total_return();
  }
  json out{{"leaves", leaves.size()},
           {"total_probability", total_prob},
           {"mean_return", mean_return}};
  std::cout << out.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridworld transfer laboratory: learns a state-space undo map "
               "by adversarial divergence minimization"};
  app.require_subcommand(1);

  CommonArgs train_args;
  std::string train_out = "policy.ckpt";
  auto* train = app.add_subcommand("train-source",
                                   "train a source policy to its regime gates");
  add_common(train, train_args, true);
  train->add_option("--out", train_out, "checkpoint file name");

  CommonArgs demo_args;
  std::string demo_policy, demo_out = "demos.traj";
  bool demo_expert = false;
  int demo_n = 10;
  auto* demo = app.add_subcommand("collect-demos",
                                  "roll source episodes into a trajectory file");
  add_common(demo, demo_args, true);
  demo->add_option("--policy", demo_policy, "policy checkpoint to roll out");
  demo->add_flag("--expert", demo_expert, "use the edge-following expert");
  demo->add_option("--n", demo_n, "episode count (>= 1)");
  demo->add_option("--out", demo_out, "trajectory file name");

  CommonArgs tvd_args;
  std::string tvd_source, tvd_resume, tvd_out = "tvd.ckpt";
  auto* tvd = app.add_subcommand(
      "run-tvd", "alternating min-max training of the undo map");
  add_common(tvd, tvd_args, true);
  tvd->add_option("--source", tvd_source,
                  "policy checkpoint (freeze_policy=true) or trajectory file "
                  "(freeze_policy=false)")
      ->required();
  tvd->add_option("--resume", tvd_resume, "resume from a tvd checkpoint");
  tvd->add_option("--out", tvd_out, "checkpoint file name");

  CommonArgs eval_args;
  std::string eval_policy, eval_tvd;
  int eval_episodes = 200;
  auto* eval = app.add_subcommand(
      "evaluate", "roll a (optionally composed) policy in the target domain");
  add_common(eval, eval_args, true);
  eval->add_option("--policy", eval_policy, "policy checkpoint");
  eval->add_option("--tvd", eval_tvd, "tvd checkpoint supplying the undo map");
  eval->add_option("--episodes", eval_episodes, "evaluation episodes");

  CommonArgs render_args;
  std::string render_traj, render_out = "heatmap";
  auto* render = app.add_subcommand("render",
                                    "render a trajectory file as an SVG panel");
  add_common(render, render_args, false);
  render->add_option("--trajectories", render_traj, "trajectory file")->required();
  render->add_option("--out", render_out, "output stem (writes .svg and .csv)");

  auto* oracle_cmd =
      app.add_subcommand("oracle", "reference solvers for the test suite");
  oracle_cmd->require_subcommand(1);
  std::string ot_in;
  auto* ot = oracle_cmd->add_subcommand("ot-lp", "exact optimal transport (<= 12 points)");
  ot->add_option("--in", ot_in, "JSON input file (default: stdin)");
  std::string dtw_in;
  auto* dtw_sc = oracle_cmd->add_subcommand("dtw-brute", "all-paths dtw (lengths <= 10)");
  dtw_sc->add_option("--in", dtw_in, "JSON input file (default: stdin)");
  GridWorldSpec bfs_spec;
  auto* bfs = oracle_cmd->add_subcommand("bfs", "shortest step count on a grid");
  bfs->add_option("--width", bfs_spec.width);
  bfs->add_option("--height", bfs_spec.height);
  bfs->add_option("--start-x", bfs_spec.start.x);
  bfs->add_option("--start-y", bfs_spec.start.y);
  bfs->add_option("--goal-x", bfs_spec.goal.x);
  bfs->add_option("--goal-y", bfs_spec.goal.y);
  std::string fdiv_in;
  auto* fdiv = oracle_cmd->add_subcommand("fdiv-exact", "closed-form f-divergences");
  fdiv->add_option("--in", fdiv_in, "JSON input file (default: stdin)");
  oracle_cmd->add_subcommand("enum-mdp", "exhaustive toy-MDP trajectory enumeration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      run_train_source(train_args, train_out);
    } else if (*demo) {
      run_collect_demos(demo_args, demo_policy, demo_expert, demo_n, demo_out);
    } else if (*tvd) {
      run_run_tvd(tvd_args, tvd_source, tvd_resume, tvd_out);
    } else if (*eval) {
      run_evaluate(eval_args, eval_policy, eval_tvd, eval_episodes);
    } else if (*render) {
      run_render(render_args, render_traj, render_out);
    } else if (*oracle_cmd) {
      if (*oracle_cmd->get_subcommand("ot-lp")) {
        oracle_ot_lp(ot_in);
      } else if (*oracle_cmd->get_subcommand("dtw-brute")) {
        oracle_dtw_brute(dtw_in);
      } else if (*oracle_cmd->get_subcommand("bfs")) {
        oracle_bfs(bfs_spec);
      } else if (*oracle_cmd->get_subcommand("fdiv-exact")) {
        oracle_fdiv_exact(fdiv_in);
      } else {
        oracle_enum_mdp();
      }
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: bad JSON input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
