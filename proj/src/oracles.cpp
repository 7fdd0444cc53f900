#include "undomap/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <queue>
#include <stdexcept>

#include "undomap/costs.hpp"

namespace undomap::oracle {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFlowEps = 1e-15;   // residual capacity below this is saturated
constexpr double kCertTol = 1e-9;    // duality-certificate tolerance

struct Arc {
  int to;
  double cap;
  double cost;
  int rev;
};

void add_arc(std::vector<std::vector<Arc>>& g, int from, int to, double cap,
             double cost) {
  g[from].push_back({to, cap, cost, static_cast<int>(g[to].size())});
  g[to].push_back({from, 0.0, -cost, static_cast<int>(g[from].size()) - 1});
}

void check_distribution(std::span<const double> w, const char* label) {
  double total = 0.0;
  for (double x : w) {
    if (x <= 0.0) throw std::invalid_argument(std::string(label) + ": weights must be positive");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(label) + ": weights must sum to 1");
  }
}

}  // namespace

ExactOtResult exact_ot(const std::vector<double>& cost, int n1, int n2,
                       std::vector<double> w1, std::vector<double> w2) {
  if (n1 <= 0 || n2 <= 0 || n1 > 12 || n2 > 12) {
    throw std::invalid_argument("exact_ot supports 1..12 points per side");
  }
  if (static_cast<int>(cost.size()) != n1 * n2 ||
      static_cast<int>(w1.size()) != n1 || static_cast<int>(w2.size()) != n2) {
    throw std::invalid_argument("exact_ot: size mismatch");
  }
  check_distribution(w1, "exact_ot w1");
  check_distribution(w2, "exact_ot w2");
  for (double c : cost) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
      throw std::invalid_argument("exact_ot: costs must be finite and nonnegative");
    }
  }

  // Min-cost flow: source -> supply nodes -> demand nodes -> sink.
  const int S = 0, T = n1 + n2 + 1, nodes = n1 + n2 + 2;
  std::vector<std::vector<Arc>> g(nodes);
  for (int i = 0; i < n1; ++i) add_arc(g, S, 1 + i, w1[i], 0.0);
  for (int j = 0; j < n2; ++j) add_arc(g, 1 + n1 + j, T, w2[j], 0.0);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      add_arc(g, 1 + i, 1 + n1 + j, 2.0, cost[i * n2 + j]);
    }
  }

  // Successive shortest paths with Bellman-Ford (graph is tiny).
  while (true) {
    std::vector<double> dist(nodes, kInf);
    std::vector<int> prev_node(nodes, -1), prev_arc(nodes, -1);
    dist[S] = 0.0;
    for (int pass = 0; pass < nodes; ++pass) {
      bool changed = false;
      for (int u = 0; u < nodes; ++u) {
        if (dist[u] == kInf) continue;
        for (int a = 0; a < static_cast<int>(g[u].size()); ++a) {
          const Arc& arc = g[u][a];
          if (arc.cap <= kFlowEps) continue;
          const double nd = dist[u] + arc.cost;
          if (nd < dist[arc.to] - 1e-15) {
            dist[arc.to] = nd;
            prev_node[arc.to] = u;
            prev_arc[arc.to] = a;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    if (dist[T] == kInf) break;
    double push = kInf;
    for (int v = T; v != S; v = prev_node[v]) {
      push = std::min(push, g[prev_node[v]][prev_arc[v]].cap);
    }
    for (int v = T; v != S; v = prev_node[v]) {
      Arc& arc = g[prev_node[v]][prev_arc[v]];
      arc.cap -= push;
      g[arc.to][arc.rev].cap += push;
    }
  }

  ExactOtResult result;
  result.plan.assign(static_cast<size_t>(n1) * n2, 0.0);
  for (int i = 0; i < n1; ++i) {
    for (const Arc& arc : g[1 + i]) {
      if (arc.to >= 1 + n1 && arc.to < 1 + n1 + n2) {
        const int j = arc.to - 1 - n1;
        const double flow = g[arc.to][arc.rev].cap;
        result.plan[i * n2 + j] = flow;
        result.value += flow * cost[i * n2 + j];
      }
    }
  }

  // Recover LP duals from the difference-constraint system
  //   u_i - w_j <= c_ij for all pairs, with equality on the support,
  // by Bellman-Ford; v_j = -w_j then satisfies u_i + v_j <= c_ij.
  const int dn = n1 + n2;
  std::vector<double> pot(dn, 0.0);
  for (int pass = 0; pass < dn + 1; ++pass) {
    bool changed = false;
    for (int i = 0; i < n1; ++i) {
      for (int j = 0; j < n2; ++j) {
        const double c = cost[i * n2 + j];
        if (pot[i] > pot[n1 + j] + c + 1e-15) {  // edge w_j -> u_i
          pot[i] = pot[n1 + j] + c;
          changed = true;
        }
        if (result.plan[i * n2 + j] > 1e-12 &&
            pot[n1 + j] > pot[i] - c + 1e-15) {  // support edge u_i -> w_j
          pot[n1 + j] = pot[i] - c;
          changed = true;
        }
      }
    }
    if (!changed) break;
    if (pass == dn) throw std::runtime_error("exact_ot: dual recovery failed to converge");
  }
  result.u.assign(pot.begin(), pot.begin() + n1);
  result.v.resize(n2);
  for (int j = 0; j < n2; ++j) result.v[j] = -pot[n1 + j];

  // Self-certification: primal feasibility, dual feasibility, strong duality.
  std::vector<double> row_sum(n1, 0.0), col_sum(n2, 0.0);
  double dual_value = 0.0;
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      const double p = result.plan[i * n2 + j];
      if (p < -kCertTol) throw std::runtime_error("exact_ot: negative plan entry");
      row_sum[i] += p;
      col_sum[j] += p;
      if (result.u[i] + result.v[j] > cost[i * n2 + j] + kCertTol) {
        throw std::runtime_error("exact_ot: dual infeasible");
      }
    }
  }
  for (int i = 0; i < n1; ++i) {
    if (std::abs(row_sum[i] - w1[i]) > kCertTol) {
      throw std::runtime_error("exact_ot: row marginal violated");
    }
    dual_value += result.u[i] * w1[i];
  }
  for (int j = 0; j < n2; ++j) {
    if (std::abs(col_sum[j] - w2[j]) > kCertTol) {
      throw std::runtime_error("exact_ot: column marginal violated");
    }
    dual_value += result.v[j] * w2[j];
  }
  if (std::abs(dual_value - result.value) > kCertTol) {
    throw std::runtime_error("exact_ot: duality gap");
  }
  return result;
}

namespace {

void dtw_paths(std::span<const GridState> t1, std::span<const GridState> t2,
               int i, int j, double acc, double& best) {
  const int n1 = static_cast<int>(t1.size()), n2 = static_cast<int>(t2.size());
  if (i == n1 - 1 && j == n2 - 1) {
    best = std::min(best, acc);
    return;
  }
  if (i + 1 < n1 && j + 1 < n2) {
    dtw_paths(t1, t2, i + 1, j + 1, acc + state_cost(t1[i + 1], t2[j + 1]), best);
  }
  if (i + 1 < n1) {
    dtw_paths(t1, t2, i + 1, j, acc + state_cost(t1[i + 1], t2[j]), best);
  }
  if (j + 1 < n2) {
    dtw_paths(t1, t2, i, j + 1, acc + state_cost(t1[i], t2[j + 1]), best);
  }
}

}  // namespace

double dtw_brute_force(std::span<const GridState> t1,
                       std::span<const GridState> t2) {
  if (t1.empty() || t2.empty()) {
    throw std::invalid_argument("dtw_brute_force requires nonempty sequences");
  }
  if (t1.size() > 12 || t2.size() > 12) {
    throw std::invalid_argument("dtw_brute_force limited to lengths <= 12");
  }
  double best = kInf;
  dtw_paths(t1, t2, 0, 0, state_cost(t1[0], t2[0]), best);
  return best;
}

int bfs_shortest_steps(const GridWorldSpec& spec) {
  spec.validate();
  const int w = spec.width, h = spec.height;
  auto idx = [&](int x, int y) { return y * w + x; };
  std::vector<int> dist(static_cast<size_t>(w) * h, -1);
  std::queue<int> frontier;
  const int sx = static_cast<int>(spec.start.x), sy = static_cast<int>(spec.start.y);
  const int gx = static_cast<int>(spec.goal.x), gy = static_cast<int>(spec.goal.y);
  dist[idx(sx, sy)] = 0;
  frontier.push(idx(sx, sy));
  while (!frontier.empty()) {
    const int cur = frontier.front();
    frontier.pop();
    const int x = cur % w, y = cur / w;
    if (x == gx && y == gy) return dist[cur];
    const int nx[4] = {x - 1, x + 1, x, x};
    const int ny[4] = {y, y, y - 1, y + 1};
    for (int k = 0; k < 4; ++k) {
      if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
      const int n = idx(nx[k], ny[k]);
      if (dist[n] < 0) {
        dist[n] = dist[cur] + 1;
        frontier.push(n);
      }
    }
  }
  throw std::runtime_error("bfs_shortest_steps: goal unreachable");
}

namespace {

void check_pair(std::span<const double> p, std::span<const double> q,
                bool need_abs_continuity) {
  if (p.size() != q.size() || p.empty()) {
    throw std::invalid_argument("divergence oracle: supports must match and be nonempty");
  }
  double sp = 0.0, sq = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) {
      throw std::invalid_argument("divergence oracle: negative mass");
    }
    if (need_abs_continuity && p[i] > 0.0 && q[i] == 0.0) {
      throw std::invalid_argument("divergence oracle: q must dominate p");
    }
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw std::invalid_argument("divergence oracle: distributions must sum to 1");
  }
}

}  // namespace

double chi2_exact(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q, true);
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (q[i] > 0.0) {
      const double d = p[i] - q[i];
      total += d * d / q[i];
    }
  }
  return total;
}

double tv_exact(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q, false);
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - q[i]);
  return 0.5 * total;
}

double kl_exact(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q, true);
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) total += p[i] * std::log(p[i] / q[i]);
  }
  return total;
}

namespace {

void enumerate_from(const GridWorldSpec& spec, const StateTransform& transform,
                    const std::function<std::array<double, 4>(const GridState&)>& action_probs,
                    const GridState& state, Trajectory& partial, double prob,
                    std::vector<WeightedTrajectory>& out) {
  if (static_cast<int>(partial.actions.size()) == spec.horizon) {
    out.push_back({partial, prob});
    return;
  }
  const auto probs = action_probs(apply_transform(transform, state));
  for (int a = 0; a < kNumActions; ++a) {
    if (probs[a] <= 0.0) continue;
    const auto res = step(spec, state, static_cast<Action>(a));
    partial.actions.push_back(static_cast<Action>(a));
    partial.rewards.push_back(res.reward);
    partial.states.push_back(apply_transform(transform, res.state));
    if (res.done) {
      out.push_back({partial, prob * probs[a]});
    } else {
      enumerate_from(spec, transform, action_probs, res.state, partial,
                     prob * probs[a], out);
    }
    partial.actions.pop_back();
    partial.rewards.pop_back();
    partial.states.pop_back();
  }
}

}  // namespace

std::vector<WeightedTrajectory> enumerate_rollouts(
    const GridWorldSpec& spec, const StateTransform& transform,
    const std::function<std::array<double, 4>(const GridState&)>& action_probs) {
  spec.validate();
  if (spec.horizon > 12) {
    throw std::invalid_argument("enumerate_rollouts limited to horizon <= 12");
  }
  std::vector<WeightedTrajectory> out;
  Trajectory partial;
  partial.states.push_back(apply_transform(transform, spec.start));
  enumerate_from(spec, transform, action_probs, spec.start, partial, 1.0, out);
  return out;
}

GridWorldSpec toy_mdp() {
  GridWorldSpec spec;
  spec.width = 2;
  spec.height = 1;
  spec.start = {0.0, 0.0};
  spec.goal = {1.0, 0.0};
  spec.horizon = 3;
  spec.step_reward = -1.0;
  return spec;
}

}  // namespace undomap::oracle
