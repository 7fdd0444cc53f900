#pragma once

#include <functional>
#include <span>
#include <vector>

#include "undomap/grid.hpp"

// Reference solvers used to pin expected values in tests.  Everything here is
// deliberately independent of the training-path implementations: exhaustive
// enumeration, network flow, and closed forms only.
namespace undomap::oracle {

struct ExactOtResult {
  double value = 0.0;
  std::vector<double> plan;  // n1 x n2 row-major coupling
  std::vector<double> u, v;  // dual potentials, u[i] + v[j] <= cost[i][j]
};

/// Exact optimal transport between two discrete distributions given the full
/// cost matrix (n1 x n2 row-major).  Solved by successive-shortest-path
/// min-cost flow; the result carries LP dual potentials and is verified
/// internally against them (feasibility and strong duality within 1e-9), so a
/// returned value is certified optimal.  Supports are limited to 12 points.
ExactOtResult exact_ot(const std::vector<double>& cost, int n1, int n2,
                       std::vector<double> w1, std::vector<double> w2);

/// Minimal warped cost over every monotone contiguous alignment, found by
/// explicit path enumeration.  Lengths limited to 12.
double dtw_brute_force(std::span<const GridState> t1,
                       std::span<const GridState> t2);

/// Fewest moves from start to goal (walls block, no diagonal moves).
int bfs_shortest_steps(const GridWorldSpec& spec);

/// Closed-form f-divergences of discrete distributions on a shared support.
/// p and q must each sum to 1 within 1e-9; chi2 and kl require q > 0 wherever
/// p > 0.
double chi2_exact(std::span<const double> p, std::span<const double> q);
double tv_exact(std::span<const double> p, std::span<const double> q);
double kl_exact(std::span<const double> p, std::span<const double> q);

struct WeightedTrajectory {
  Trajectory traj;
  double prob = 0.0;
};

/// Every trajectory the MDP can produce under the given action distribution,
/// with its exact probability.  action_probs maps an observed state to 4
/// action probabilities.  Trajectories mirror rollout(): states are observed
/// (transformed) coordinates and episodes stop at the goal.  Limited to
/// 4^horizon <= 2^24 branches.
std::vector<WeightedTrajectory> enumerate_rollouts(
    const GridWorldSpec& spec, const StateTransform& transform,
    const std::function<std::array<double, 4>(const GridState&)>& action_probs);

/// Two-cell corridor MDP (2x1 grid, goal one step right, horizon 3) small
/// enough for exact enumeration of all trajectories.
GridWorldSpec toy_mdp();

}  // namespace undomap::oracle
