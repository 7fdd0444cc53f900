#include "undomap/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace undomap {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + s + "'");
  }
  return v;
}

long long parse_int(const std::string& s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not an integer: '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not an unsigned integer: '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw std::invalid_argument("not a bool (true/false): '" + s + "'");
}

std::string fmt_ints(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<int>(parse_int(trim(item))));
  }
  return out;
}

const char* transform_kind_name(TransformKind kind) {
  return kind == TransformKind::Identity ? "identity" : "rotation";
}

TransformKind transform_kind_from_name(const std::string& name) {
  if (name == "identity") return TransformKind::Identity;
  if (name == "rotation") return TransformKind::Rotation;
  throw std::invalid_argument("unknown transform kind: '" + name + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

// Declaration order is the serialization order.
const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> kFields = {
      {"config_version", [](const C&) { return std::to_string(kConfigVersion); },
       [](C&, const std::string& v) {
         if (parse_int(v) != kConfigVersion) {
           throw std::invalid_argument("unsupported config_version " + v +
                                       " (this build reads version " +
                                       std::to_string(kConfigVersion) + ")");
         }
       }},
      {"seed", [](const C& c) { return std::to_string(c.seed); },
       [](C& c, const std::string& v) { c.seed = parse_u64(v); }},
      {"output_dir", [](const C& c) { return c.output_dir; },
       [](C& c, const std::string& v) { c.output_dir = v; }},
      {"source_regime", [](const C& c) { return std::string(regime_name(c.source_regime)); },
       [](C& c, const std::string& v) { c.source_regime = regime_from_name(v); }},

      {"gridworld.width", [](const C& c) { return std::to_string(c.gridworld.width); },
       [](C& c, const std::string& v) { c.gridworld.width = static_cast<int>(parse_int(v)); }},
      {"gridworld.height", [](const C& c) { return std::to_string(c.gridworld.height); },
       [](C& c, const std::string& v) { c.gridworld.height = static_cast<int>(parse_int(v)); }},
      {"gridworld.start_x", [](const C& c) { return fmt_double(c.gridworld.start.x); },
       [](C& c, const std::string& v) { c.gridworld.start.x = parse_double(v); }},
      {"gridworld.start_y", [](const C& c) { return fmt_double(c.gridworld.start.y); },
       [](C& c, const std::string& v) { c.gridworld.start.y = parse_double(v); }},
      {"gridworld.goal_x", [](const C& c) { return fmt_double(c.gridworld.goal.x); },
       [](C& c, const std::string& v) { c.gridworld.goal.x = parse_double(v); }},
      {"gridworld.goal_y", [](const C& c) { return fmt_double(c.gridworld.goal.y); },
       [](C& c, const std::string& v) { c.gridworld.goal.y = parse_double(v); }},
      {"gridworld.horizon", [](const C& c) { return std::to_string(c.gridworld.horizon); },
       [](C& c, const std::string& v) { c.gridworld.horizon = static_cast<int>(parse_int(v)); }},
      {"gridworld.step_reward", [](const C& c) { return fmt_double(c.gridworld.step_reward); },
       [](C& c, const std::string& v) { c.gridworld.step_reward = parse_double(v); }},

      {"transform.kind", [](const C& c) { return std::string(transform_kind_name(c.transform.kind)); },
       [](C& c, const std::string& v) { c.transform.kind = transform_kind_from_name(v); }},
      {"transform.angle", [](const C& c) { return fmt_double(c.transform.angle); },
       [](C& c, const std::string& v) { c.transform.angle = parse_double(v); }},
      {"transform.center_x", [](const C& c) { return fmt_double(c.transform.center.x); },
       [](C& c, const std::string& v) { c.transform.center.x = parse_double(v); }},
      {"transform.center_y", [](const C& c) { return fmt_double(c.transform.center.y); },
       [](C& c, const std::string& v) { c.transform.center.y = parse_double(v); }},

      {"divergence.kind", [](const C& c) { return std::string(divergence_name(c.divergence.kind)); },
       [](C& c, const std::string& v) { c.divergence.kind = divergence_from_name(v); }},
      {"divergence.alpha", [](const C& c) { return fmt_double(c.divergence.alpha); },
       [](C& c, const std::string& v) { c.divergence.alpha = parse_double(v); }},
      {"divergence.cost_mode", [](const C& c) { return std::string(cost_mode_name(c.divergence.cost.mode)); },
       [](C& c, const std::string& v) { c.divergence.cost.mode = cost_mode_from_name(v); }},
      {"divergence.potential_lr", [](const C& c) { return fmt_double(c.divergence.potential_lr); },
       [](C& c, const std::string& v) { c.divergence.potential_lr = parse_double(v); }},
      {"divergence.inner_steps", [](const C& c) { return std::to_string(c.divergence.inner_steps); },
       [](C& c, const std::string& v) { c.divergence.inner_steps = static_cast<int>(parse_int(v)); }},
      {"divergence.batch_size", [](const C& c) { return std::to_string(c.divergence.batch_size); },
       [](C& c, const std::string& v) { c.divergence.batch_size = static_cast<int>(parse_int(v)); }},
      {"divergence.potential_hidden", [](const C& c) { return fmt_ints(c.divergence.potential_hidden); },
       [](C& c, const std::string& v) { c.divergence.potential_hidden = parse_ints(v); }},

      {"tvd.family", [](const C& c) { return std::string(undo_family_name(c.tvd.family)); },
       [](C& c, const std::string& v) { c.tvd.family = undo_family_from_name(v); }},
      {"tvd.freeze_policy", [](const C& c) { return std::string(c.tvd.freeze_policy ? "true" : "false"); },
       [](C& c, const std::string& v) { c.tvd.freeze_policy = parse_bool(v); }},
      {"tvd.outer_iterations", [](const C& c) { return std::to_string(c.tvd.outer_iterations); },
       [](C& c, const std::string& v) { c.tvd.outer_iterations = static_cast<int>(parse_int(v)); }},
      {"tvd.outer_lr", [](const C& c) { return fmt_double(c.tvd.outer_lr); },
       [](C& c, const std::string& v) { c.tvd.outer_lr = parse_double(v); }},
      {"tvd.policy_lr", [](const C& c) { return fmt_double(c.tvd.policy_lr); },
       [](C& c, const std::string& v) { c.tvd.policy_lr = parse_double(v); }},
      {"tvd.rollout_batch", [](const C& c) { return std::to_string(c.tvd.rollout_batch); },
       [](C& c, const std::string& v) { c.tvd.rollout_batch = static_cast<int>(parse_int(v)); }},
      {"tvd.lambda", [](const C& c) { return fmt_double(c.tvd.lambda); },
       [](C& c, const std::string& v) { c.tvd.lambda = parse_double(v); }},
      {"tvd.eval_episodes", [](const C& c) { return std::to_string(c.tvd.eval_episodes); },
       [](C& c, const std::string& v) { c.tvd.eval_episodes = static_cast<int>(parse_int(v)); }},
      {"tvd.error_sample_size", [](const C& c) { return std::to_string(c.tvd.error_sample_size); },
       [](C& c, const std::string& v) { c.tvd.error_sample_size = static_cast<int>(parse_int(v)); }},
      {"tvd.checkpoint_every", [](const C& c) { return std::to_string(c.tvd.checkpoint_every); },
       [](C& c, const std::string& v) { c.tvd.checkpoint_every = static_cast<int>(parse_int(v)); }},
      {"tvd.grad_clip", [](const C& c) { return fmt_double(c.tvd.grad_clip); },
       [](C& c, const std::string& v) { c.tvd.grad_clip = parse_double(v); }},
      {"tvd.undo_hidden", [](const C& c) { return fmt_ints(c.tvd.undo_hidden); },
       [](C& c, const std::string& v) { c.tvd.undo_hidden = parse_ints(v); }},
  };
  return kFields;
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.transform = StateTransform::rotation(std::acos(-1.0) / 2.0,
                                           cfg.gridworld.center());
  return cfg;
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(cfg);
    out += "\n";
  }
  return out;
}

ExperimentConfig config_from_text(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (!seen.insert(key).second) {
      throw std::invalid_argument("config: duplicate key '" + key + "'");
    }
    apply_override(cfg, key, value);
  }
  if (!seen.contains("config_version")) {
    throw std::invalid_argument("config: missing config_version");
  }
  return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      try {
        f.set(cfg, value);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config key '" + key + "': " + e.what());
      }
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

TvDConfig tvd_config(const ExperimentConfig& cfg) {
  TvDConfig t = cfg.tvd;
  t.divergence = cfg.divergence;
  t.seed = cfg.seed;
  return t;
}

}  // namespace undomap
