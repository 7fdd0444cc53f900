#include "undomap/costs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace undomap {

const char* cost_mode_name(CostMode mode) {
  switch (mode) {
    case CostMode::StateL2:
      return "state_l2";
    case CostMode::TrajectoryDTW:
      return "trajectory_dtw";
  }
  throw std::logic_error("unknown cost mode");
}

CostMode cost_mode_from_name(const std::string& name) {
  if (name == "state_l2") return CostMode::StateL2;
  if (name == "trajectory_dtw") return CostMode::TrajectoryDTW;
  throw std::invalid_argument("unknown cost mode: " + name);
}

double state_cost(const GridState& s1, const GridState& s2) {
  return std::hypot(s1.x - s2.x, s1.y - s2.y);
}

DtwResult dtw(std::span<const GridState> t1, std::span<const GridState> t2) {
  const int n1 = static_cast<int>(t1.size());
  const int n2 = static_cast<int>(t2.size());
  if (n1 == 0 || n2 == 0) {
    throw std::invalid_argument("dtw requires nonempty sequences");
  }
  auto base = [&](int i, int j) { return state_cost(t1[i], t2[j]); };

  std::vector<double> d(static_cast<size_t>(n1) * n2);
  auto D = [&](int i, int j) -> double& { return d[static_cast<size_t>(i) * n2 + j]; };
  D(0, 0) = base(0, 0);
  for (int i = 1; i < n1; ++i) D(i, 0) = base(i, 0) + D(i - 1, 0);
  for (int j = 1; j < n2; ++j) D(0, j) = base(0, j) + D(0, j - 1);
  for (int i = 1; i < n1; ++i) {
    for (int j = 1; j < n2; ++j) {
      D(i, j) = base(i, j) + std::min({D(i - 1, j - 1), D(i - 1, j), D(i, j - 1)});
    }
  }

  DtwResult result;
  result.distance = D(n1 - 1, n2 - 1);
  int i = n1 - 1, j = n2 - 1;
  result.alignment.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double m = std::min({D(i - 1, j - 1), D(i - 1, j), D(i, j - 1)});
      if (D(i - 1, j - 1) == m) {
        --i;
        --j;
      } else if (D(i - 1, j) == m) {
        --i;
      } else {
        --j;
      }
    }
    result.alignment.emplace_back(i, j);
  }
  std::reverse(result.alignment.begin(), result.alignment.end());
  return result;
}

std::vector<Vec2> dtw_subgradient(std::span<const GridState> t1,
                                  std::span<const GridState> t2) {
  const DtwResult res = dtw(t1, t2);
  std::vector<Vec2> grad(t2.size(), Vec2{0.0, 0.0});
  for (auto [i, j] : res.alignment) {
    const double dx = t2[j].x - t1[i].x;
    const double dy = t2[j].y - t1[i].y;
    const double norm = std::hypot(dx, dy);
    if (norm > 0.0) {
      grad[j][0] += dx / norm;
      grad[j][1] += dy / norm;
    }
  }
  return grad;
}

}  // namespace undomap
