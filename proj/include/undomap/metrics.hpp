#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "undomap/divergences.hpp"
#include "undomap/grid.hpp"
#include "undomap/policy.hpp"

namespace undomap {

/// One logged outer iteration of the transfer optimizer.
struct MetricRow {
  int iteration = 0;
  double wasserstein_estimate = 0.0;
  double target_return = 0.0;
  double undo_map_error = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "iteration,wasserstein_estimate,target_return,undo_map_error";

std::string metrics_to_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> metrics_from_csv(const std::string& text);

/// Mean squared distance between sampled source states and their image under
/// the learned map composed with the true domain transform:
///   mean over p of |p - undo(T(p))|^2.
/// The transform is evaluation-only knowledge here.
double undo_map_error(std::span<const GridState> source_states,
                      const StateMap& undo, const StateTransform& transform);

/// Read-only divergence estimate on held-out batches for the logged curve.
double wasserstein_track(const SamplePool& eval1, const SamplePool& eval2,
                         const std::vector<double>& cost,
                         const DualPotentials& pot,
                         const DivergenceSpec& spec);

struct TrajectoryHeatmap {
  int width = 0;
  int height = 0;
  int episodes = 0;
  std::vector<long> visits;                       // width*height cell counts
  std::map<std::pair<int, int>, long> edges;      // (from cell, to cell) counts
  GridState start{0, 0}, goal{0, 0};              // observed-frame markers
};

/// Accumulates visit and transition counts of episodes in their observed
/// coordinate frame (off-lattice states are binned to the nearest cell).
TrajectoryHeatmap render_heatmap(const std::vector<Trajectory>& episodes,
                                 const GridWorldSpec& grid,
                                 const StateTransform& transform);

/// Self-contained SVG panel: cells darkened with visit counts, transition
/// segments, start and goal markers.
std::string heatmap_svg(const TrajectoryHeatmap& map);

/// Raw counts for external plotting: x,y,visits rows.
std::string heatmap_counts_csv(const TrajectoryHeatmap& map);

/// Spearman rank correlation (average ranks on ties), in [-1, 1].
double spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace undomap
