#pragma once

#include <cstdint>
#include <string>

#include "undomap/divergences.hpp"
#include "undomap/grid.hpp"
#include "undomap/policy.hpp"
#include "undomap/tvd.hpp"

namespace undomap {

/// Everything one experiment needs, serializable as flat `key = value` lines
/// with dotted keys.  Loading rejects unknown keys and versions other than
/// kConfigVersion; values round-trip losslessly.
struct ExperimentConfig {
  GridWorldSpec gridworld;
  // Center matches the default 8x8 grid; set transform.center_* alongside
  // nonstandard grid dimensions.
  StateTransform transform{TransformKind::Identity, 0.0, {3.5, 3.5}};
  SourceRegime source_regime = SourceRegime::HighEntropyOptimal;
  DivergenceSpec divergence;
  TvDConfig tvd;  // divergence and seed members are supplied by the fields above
  std::string output_dir = "out";
  std::uint64_t seed = 1;
};

inline constexpr int kConfigVersion = 1;

/// The canonical experiment: pi/2-rotated 8x8 grid, Wasserstein objective on
/// trajectory alignments, linear undo family, frozen high-entropy source.
ExperimentConfig default_config();

std::string config_to_text(const ExperimentConfig& cfg);
/// Throws std::invalid_argument on unknown keys, duplicates, malformed
/// values, or a missing/unsupported config_version.
ExperimentConfig config_from_text(const std::string& text);

/// Applies one dotted-path override, e.g. ("tvd.outer_lr", "1e-3").
void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value);

/// The tvd module's view: cfg.tvd with the shared divergence and seed wired in.
TvDConfig tvd_config(const ExperimentConfig& cfg);

}  // namespace undomap
