#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "undomap/grid.hpp"

namespace undomap {

enum class CostMode {
  StateL2,        // ground cost between individual states
  TrajectoryDTW,  // ground cost between whole trajectories
};

struct CostSpec {
  CostMode mode = CostMode::TrajectoryDTW;
};

const char* cost_mode_name(CostMode mode);
CostMode cost_mode_from_name(const std::string& name);

/// Euclidean distance between grid coordinates.
double state_cost(const GridState& s1, const GridState& s2);

struct DtwResult {
  double distance = 0.0;
  // Monotone contiguous warping path from (0,0) to (L1-1, L2-1).
  std::vector<std::pair<int, int>> alignment;
};

/// Dynamic time warping with per-pair cost ‖t1[i] − t2[j]‖₂.
/// Ties in the DP backtrack prefer diagonal, then (i−1,j), then (i,j−1).
DtwResult dtw(std::span<const GridState> t1, std::span<const GridState> t2);

/// Envelope subgradient of dtw(t1, t2) w.r.t. each state of t2: the optimal
/// alignment is held fixed and each aligned ‖t1[i] − t2[j]‖ term is
/// differentiated; the gradient of ‖·‖ at zero is taken to be zero.
std::vector<Vec2> dtw_subgradient(std::span<const GridState> t1,
                                  std::span<const GridState> t2);

}  // namespace undomap
