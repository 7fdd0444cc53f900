#include "undomap/io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "undomap/metrics.hpp"

namespace undomap {

namespace {

constexpr char kMagic[4] = {'U', 'M', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void append_raw(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class RawReader {
 public:
  explicit RawReader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T read() {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw std::invalid_argument("checkpoint: truncated data");
    }
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string read_str(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw std::invalid_argument("checkpoint: truncated data");
    }
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double_tok(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("trajectory file: bad number '" + s + "'");
  }
  return v;
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
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(std::stoi(item));
  }
  return out;
}

}  // namespace

void CheckpointWriter::put_str(const std::string& key, const std::string& value) {
  append_raw<std::uint32_t>(body_, static_cast<std::uint32_t>(key.size()));
  body_ += key;
  body_ += 's';
  append_raw<std::uint64_t>(body_, value.size());
  body_ += value;
}

void CheckpointWriter::put_i64(const std::string& key, std::int64_t value) {
  append_raw<std::uint32_t>(body_, static_cast<std::uint32_t>(key.size()));
  body_ += key;
  body_ += 'i';
  append_raw<std::int64_t>(body_, value);
}

void CheckpointWriter::put_f64(const std::string& key, double value) {
  append_raw<std::uint32_t>(body_, static_cast<std::uint32_t>(key.size()));
  body_ += key;
  body_ += 'f';
  append_raw<double>(body_, value);
}

void CheckpointWriter::put_vec(const std::string& key,
                               const std::vector<double>& value) {
  append_raw<std::uint32_t>(body_, static_cast<std::uint32_t>(key.size()));
  body_ += key;
  body_ += 'v';
  append_raw<std::uint64_t>(body_, value.size());
  for (double v : value) append_raw<double>(body_, v);
}

std::string CheckpointWriter::bytes() const {
  std::string out(kMagic, sizeof(kMagic));
  append_raw<std::uint32_t>(out, kCheckpointVersion);
  out += body_;
  return out;
}

CheckpointReader::CheckpointReader(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::invalid_argument("checkpoint: bad magic (not a checkpoint file)");
  }
  RawReader raw(bytes);
  raw.read_str(sizeof(kMagic));
  const auto version = raw.read<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw std::invalid_argument("checkpoint: unsupported version " +
                                std::to_string(version));
  }
  while (!raw.done()) {
    const auto key_len = raw.read<std::uint32_t>();
    const std::string key = raw.read_str(key_len);
    Entry e;
    e.type = raw.read<char>();
    switch (e.type) {
      case 's': e.str = raw.read_str(raw.read<std::uint64_t>()); break;
      case 'i': e.i64 = raw.read<std::int64_t>(); break;
      case 'f': e.f64 = raw.read<double>(); break;
      case 'v': {
        const auto n = raw.read<std::uint64_t>();
        e.vec.reserve(n);
        for (std::uint64_t k = 0; k < n; ++k) e.vec.push_back(raw.read<double>());
        break;
      }
      default:
        throw std::invalid_argument("checkpoint: unknown entry type");
    }
    entries_[key] = std::move(e);
  }
}

const CheckpointReader::Entry& CheckpointReader::entry(const std::string& key,
                                                       char type) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw std::invalid_argument("checkpoint: missing key '" + key + "'");
  }
  if (it->second.type != type) {
    throw std::invalid_argument("checkpoint: key '" + key + "' has wrong type");
  }
  return it->second;
}

std::string CheckpointReader::str(const std::string& key) const {
  return entry(key, 's').str;
}
std::int64_t CheckpointReader::i64(const std::string& key) const {
  return entry(key, 'i').i64;
}
double CheckpointReader::f64(const std::string& key) const {
  return entry(key, 'f').f64;
}
std::vector<double> CheckpointReader::vec(const std::string& key) const {
  return entry(key, 'v').vec;
}
bool CheckpointReader::has(const std::string& key) const {
  return entries_.contains(key);
}

namespace {

void put_grid(CheckpointWriter& w, const std::string& prefix,
              const GridWorldSpec& spec) {
  w.put_i64(prefix + ".width", spec.width);
  w.put_i64(prefix + ".height", spec.height);
  w.put_f64(prefix + ".start_x", spec.start.x);
  w.put_f64(prefix + ".start_y", spec.start.y);
  w.put_f64(prefix + ".goal_x", spec.goal.x);
  w.put_f64(prefix + ".goal_y", spec.goal.y);
  w.put_i64(prefix + ".horizon", spec.horizon);
  w.put_f64(prefix + ".step_reward", spec.step_reward);
}

GridWorldSpec read_grid(const CheckpointReader& r, const std::string& prefix) {
  GridWorldSpec spec;
  spec.width = static_cast<int>(r.i64(prefix + ".width"));
  spec.height = static_cast<int>(r.i64(prefix + ".height"));
  spec.start = {r.f64(prefix + ".start_x"), r.f64(prefix + ".start_y")};
  spec.goal = {r.f64(prefix + ".goal_x"), r.f64(prefix + ".goal_y")};
  spec.horizon = static_cast<int>(r.i64(prefix + ".horizon"));
  spec.step_reward = r.f64(prefix + ".step_reward");
  return spec;
}

void put_mlp(CheckpointWriter& w, const std::string& prefix, const Mlp& net) {
  w.put_i64(prefix + ".input_dim", net.spec().input_dim);
  w.put_str(prefix + ".hidden", fmt_ints(net.spec().hidden));
  w.put_i64(prefix + ".output_dim", net.spec().output_dim);
  w.put_vec(prefix + ".params", net.params());
}

Mlp read_mlp(const CheckpointReader& r, const std::string& prefix) {
  MlpSpec spec;
  spec.input_dim = static_cast<int>(r.i64(prefix + ".input_dim"));
  spec.hidden = parse_ints(r.str(prefix + ".hidden"));
  spec.output_dim = static_cast<int>(r.i64(prefix + ".output_dim"));
  Mlp net(spec);
  auto params = r.vec(prefix + ".params");
  if (static_cast<int>(params.size()) != net.param_count()) {
    throw std::invalid_argument("checkpoint: parameter count mismatch for '" +
                                prefix + "'");
  }
  net.params() = std::move(params);
  return net;
}

void check_kind(const CheckpointReader& r, const std::string& expected) {
  const std::string kind = r.str("kind");
  if (kind != expected) {
    throw std::invalid_argument("checkpoint: expected a " + expected +
                                " checkpoint, found '" + kind + "'");
  }
}

}  // namespace

std::string policy_checkpoint_bytes(const PolicyCheckpoint& ckpt) {
  CheckpointWriter w;
  w.put_str("kind", "policy");
  put_grid(w, "grid", ckpt.policy.grid);
  put_mlp(w, "net", ckpt.policy.net);
  w.put_str("regime", regime_name(ckpt.regime));
  w.put_f64("eval.goal_rate", ckpt.eval.goal_rate);
  w.put_f64("eval.mean_return", ckpt.eval.mean_return);
  w.put_f64("eval.mean_entropy", ckpt.eval.mean_entropy);
  w.put_i64("seed", static_cast<std::int64_t>(ckpt.seed));
  return w.bytes();
}

PolicyCheckpoint policy_checkpoint_from_bytes(const std::string& bytes) {
  const CheckpointReader r(bytes);
  check_kind(r, "policy");
  PolicyCheckpoint out;
  out.policy.grid = read_grid(r, "grid");
  out.policy.net = read_mlp(r, "net");
  out.regime = regime_from_name(r.str("regime"));
  out.eval.goal_rate = r.f64("eval.goal_rate");
  out.eval.mean_return = r.f64("eval.mean_return");
  out.eval.mean_entropy = r.f64("eval.mean_entropy");
  out.seed = static_cast<std::uint64_t>(r.i64("seed"));
  return out;
}

std::string tvd_checkpoint_bytes(const TvDState& state) {
  CheckpointWriter w;
  w.put_str("kind", "tvd");
  w.put_i64("iteration", state.iteration);
  w.put_str("undo.family", undo_family_name(state.undo.family));
  w.put_f64("undo.center_x", state.undo.center.x);
  w.put_f64("undo.center_y", state.undo.center.y);
  if (state.undo.family == UndoFamily::Mlp) {
    put_mlp(w, "undo.net", state.undo.net);
    w.put_f64("undo.net_scale", state.undo.net_scale);
  } else {
    w.put_vec("undo.lin", state.undo.lin);
  }
  put_grid(w, "policy.grid", state.policy.grid);
  put_mlp(w, "policy.net", state.policy.net);
  put_mlp(w, "potentials.h", state.potentials.h);
  put_mlp(w, "potentials.g", state.potentials.g);
  w.put_str("history", metrics_to_csv(state.history));
  return w.bytes();
}

TvDState tvd_checkpoint_from_bytes(const std::string& bytes) {
  const CheckpointReader r(bytes);
  check_kind(r, "tvd");
  TvDState state;
  state.iteration = static_cast<int>(r.i64("iteration"));
  state.undo.family = undo_family_from_name(r.str("undo.family"));
  state.undo.center = {r.f64("undo.center_x"), r.f64("undo.center_y")};
  if (state.undo.family == UndoFamily::Mlp) {
    state.undo.net = read_mlp(r, "undo.net");
    state.undo.net_scale = r.f64("undo.net_scale");
  } else {
    state.undo.lin = r.vec("undo.lin");
    const size_t expected = state.undo.family == UndoFamily::Linear ? 4 : 6;
    if (state.undo.lin.size() != expected) {
      throw std::invalid_argument("checkpoint: undo parameter count mismatch");
    }
  }
  state.policy.grid = read_grid(r, "policy.grid");
  state.policy.net = read_mlp(r, "policy.net");
  state.potentials.h = read_mlp(r, "potentials.h");
  state.potentials.g = read_mlp(r, "potentials.g");
  state.history = metrics_from_csv(r.str("history"));
  return state;
}

std::string trajectory_file_to_text(const TrajectoryFileData& data) {
  std::string out = "trajectoryfile 1\n";
  out += "grid " + std::to_string(data.grid.width) + " " +
         std::to_string(data.grid.height) + " " + fmt_double(data.grid.start.x) +
         " " + fmt_double(data.grid.start.y) + " " + fmt_double(data.grid.goal.x) +
         " " + fmt_double(data.grid.goal.y) + " " +
         std::to_string(data.grid.horizon) + " " +
         fmt_double(data.grid.step_reward) + "\n";
  out += "transform ";
  out += (data.transform.kind == TransformKind::Identity ? "identity" : "rotation");
  out += " " + fmt_double(data.transform.angle) + " " +
         fmt_double(data.transform.center.x) + " " +
         fmt_double(data.transform.center.y) + "\n";
  out += "policy " + data.policy_id + "\n";
  out += "seed " + std::to_string(data.seed) + "\n";
  out += "episodes " + std::to_string(data.trajectories.size()) + "\n";
  for (const auto& traj : data.trajectories) {
    if (traj.states.size() != traj.actions.size() + 1 ||
        traj.rewards.size() != traj.actions.size()) {
      throw std::invalid_argument("trajectory file: malformed trajectory");
    }
    out += "episode " + std::to_string(traj.length()) + "\n";
    out += "states";
    for (const auto& s : traj.states) {
      out += " " + fmt_double(s.x) + " " + fmt_double(s.y);
    }
    out += "\nactions";
    for (Action a : traj.actions) out += std::string(" ") + action_name(a);
    out += "\nrewards";
    for (double rwd : traj.rewards) out += " " + fmt_double(rwd);
    out += "\n";
  }
  return out;
}

namespace {

std::vector<std::string> tokens_of(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::string next_line(std::stringstream& ss, const char* what) {
  std::string line;
  if (!std::getline(ss, line)) {
    throw std::invalid_argument(std::string("trajectory file: missing ") + what);
  }
  return line;
}

}  // namespace

TrajectoryFileData trajectory_file_from_text(const std::string& text) {
  std::stringstream ss(text);
  TrajectoryFileData data;

  auto head = tokens_of(next_line(ss, "header"));
  if (head.size() != 2 || head[0] != "trajectoryfile" || head[1] != "1") {
    throw std::invalid_argument("trajectory file: bad header (expected 'trajectoryfile 1')");
  }
  auto grid = tokens_of(next_line(ss, "grid line"));
  if (grid.size() != 9 || grid[0] != "grid") {
    throw std::invalid_argument("trajectory file: bad grid line");
  }
  data.grid.width = std::stoi(grid[1]);
  data.grid.height = std::stoi(grid[2]);
  data.grid.start = {parse_double_tok(grid[3]), parse_double_tok(grid[4])};
  data.grid.goal = {parse_double_tok(grid[5]), parse_double_tok(grid[6])};
  data.grid.horizon = std::stoi(grid[7]);
  data.grid.step_reward = parse_double_tok(grid[8]);

  auto tf = tokens_of(next_line(ss, "transform line"));
  if (tf.size() != 5 || tf[0] != "transform" ||
      (tf[1] != "identity" && tf[1] != "rotation")) {
    throw std::invalid_argument("trajectory file: bad transform line");
  }
  data.transform.kind =
      tf[1] == "identity" ? TransformKind::Identity : TransformKind::Rotation;
  data.transform.angle = parse_double_tok(tf[2]);
  data.transform.center = {parse_double_tok(tf[3]), parse_double_tok(tf[4])};

  const std::string pol_line = next_line(ss, "policy line");
  if (pol_line.rfind("policy ", 0) != 0) {
    throw std::invalid_argument("trajectory file: bad policy line");
  }
  data.policy_id = pol_line.substr(7);

  auto seed = tokens_of(next_line(ss, "seed line"));
  if (seed.size() != 2 || seed[0] != "seed") {
    throw std::invalid_argument("trajectory file: bad seed line");
  }
  data.seed = std::stoull(seed[1]);

  auto count = tokens_of(next_line(ss, "episodes line"));
  if (count.size() != 2 || count[0] != "episodes") {
    throw std::invalid_argument("trajectory file: bad episodes line");
  }
  const int n = std::stoi(count[1]);

  for (int e = 0; e < n; ++e) {
    auto ep = tokens_of(next_line(ss, "episode line"));
    if (ep.size() != 2 || ep[0] != "episode") {
      throw std::invalid_argument("trajectory file: bad episode line");
    }
    const int L = std::stoi(ep[1]);
    if (L < 0) throw std::invalid_argument("trajectory file: negative length");
    Trajectory traj;

    auto st = tokens_of(next_line(ss, "states line"));
    if (st.size() != static_cast<size_t>(2 * (L + 1) + 1) || st[0] != "states") {
      throw std::invalid_argument("trajectory file: bad states line");
    }
    for (int k = 0; k <= L; ++k) {
      traj.states.push_back(
          {parse_double_tok(st[1 + 2 * k]), parse_double_tok(st[2 + 2 * k])});
    }
    auto ac = tokens_of(next_line(ss, "actions line"));
    if (ac.size() != static_cast<size_t>(L + 1) || ac[0] != "actions") {
      throw std::invalid_argument("trajectory file: bad actions line");
    }
    for (int k = 0; k < L; ++k) {
      traj.actions.push_back(action_from_name(ac[1 + k]));
    }
    auto rw = tokens_of(next_line(ss, "rewards line"));
    if (rw.size() != static_cast<size_t>(L + 1) || rw[0] != "rewards") {
      throw std::invalid_argument("trajectory file: bad rewards line");
    }
    for (int k = 0; k < L; ++k) {
      traj.rewards.push_back(parse_double_tok(rw[1 + k]));
    }
    data.trajectories.push_back(std::move(traj));
  }
  return data;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::invalid_argument("cannot open file: " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw std::runtime_error("error reading file: " + path.string());
  }
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open file for writing: " + path.string());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) {
    throw std::runtime_error("error writing file: " + path.string());
  }
}

}  // namespace undomap
