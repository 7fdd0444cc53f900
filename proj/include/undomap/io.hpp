#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "undomap/policy.hpp"
#include "undomap/tvd.hpp"

namespace undomap {

/// Binary container for model state: a magic header, a format version, and
/// tagged key-value entries (string, i64, f64, f64 vector).  Entries are
/// written in insertion order, so identical state gives identical bytes.
class CheckpointWriter {
 public:
  void put_str(const std::string& key, const std::string& value);
  void put_i64(const std::string& key, std::int64_t value);
  void put_f64(const std::string& key, double value);
  void put_vec(const std::string& key, const std::vector<double>& value);

  std::string bytes() const;

 private:
  std::string body_;
};

/// Throws std::invalid_argument on bad magic/version, truncated data, a
/// missing key, or a type mismatch.
class CheckpointReader {
 public:
  explicit CheckpointReader(const std::string& bytes);

  std::string str(const std::string& key) const;
  std::int64_t i64(const std::string& key) const;
  double f64(const std::string& key) const;
  std::vector<double> vec(const std::string& key) const;
  bool has(const std::string& key) const;

 private:
  struct Entry {
    char type = 0;
    std::string str;
    std::int64_t i64 = 0;
    double f64 = 0.0;
    std::vector<double> vec;
  };
  const Entry& entry(const std::string& key, char type) const;
  std::map<std::string, Entry> entries_;
};

struct PolicyCheckpoint {
  Policy policy;
  SourceRegime regime = SourceRegime::HighEntropyOptimal;
  PolicyEval eval;
  std::uint64_t seed = 0;
};

std::string policy_checkpoint_bytes(const PolicyCheckpoint& ckpt);
PolicyCheckpoint policy_checkpoint_from_bytes(const std::string& bytes);

/// Flat TvD optimizer snapshot: every parameter vector plus the metric
/// history embedded as a CSV block.
std::string tvd_checkpoint_bytes(const TvDState& state);
TvDState tvd_checkpoint_from_bytes(const std::string& bytes);

/// Text container for episode batches: a header naming the generating grid,
/// transform, policy id and seed, then one (states, actions, rewards) record
/// per episode.  Doubles use shortest round-trip formatting, so write/read
/// is bitwise stable.
struct TrajectoryFileData {
  GridWorldSpec grid;
  StateTransform transform;
  std::string policy_id;
  std::uint64_t seed = 0;
  std::vector<Trajectory> trajectories;
};

std::string trajectory_file_to_text(const TrajectoryFileData& data);
TrajectoryFileData trajectory_file_from_text(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace undomap
