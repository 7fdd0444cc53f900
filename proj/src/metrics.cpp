#include "undomap/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace undomap {

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad numeric field: " + s);
  }
  return v;
}

}  // namespace

std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& row : rows) {
    if (!std::isfinite(row.wasserstein_estimate) ||
        !std::isfinite(row.target_return) ||
        !std::isfinite(row.undo_map_error)) {
      throw std::invalid_argument("metric row contains a non-finite value");
    }
    out += std::to_string(row.iteration);
    out += ',';
    out += format_double(row.wasserstein_estimate);
    out += ',';
    out += format_double(row.target_return);
    out += ',';
    out += format_double(row.undo_map_error);
    out += '\n';
  }
  return out;
}

std::vector<MetricRow> metrics_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::invalid_argument("metrics csv: missing or wrong header");
  }
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<std::string, 4> fields;
    size_t pos = 0;
    for (int f = 0; f < 4; ++f) {
      const size_t comma = line.find(',', pos);
      if ((comma == std::string::npos) != (f == 3)) {
        throw std::invalid_argument("metrics csv: wrong field count");
      }
      fields[f] = line.substr(pos, comma == std::string::npos ? comma : comma - pos);
      pos = comma + 1;
    }
    MetricRow row;
    row.iteration = static_cast<int>(parse_double(fields[0]));
    row.wasserstein_estimate = parse_double(fields[1]);
    row.target_return = parse_double(fields[2]);
    row.undo_map_error = parse_double(fields[3]);
    rows.push_back(row);
  }
  return rows;
}

double undo_map_error(std::span<const GridState> source_states,
                      const StateMap& undo, const StateTransform& transform) {
  if (source_states.empty()) {
    throw std::invalid_argument("undo_map_error: empty state sample");
  }
  double total = 0.0;
  for (const auto& p : source_states) {
    const GridState mapped = undo(apply_transform(transform, p));
    const double dx = p.x - mapped.x;
    const double dy = p.y - mapped.y;
    total += dx * dx + dy * dy;
  }
  return total / static_cast<double>(source_states.size());
}

double wasserstein_track(const SamplePool& eval1, const SamplePool& eval2,
                         const std::vector<double>& cost,
                         const DualPotentials& pot,
                         const DivergenceSpec& spec) {
  return wasserstein_objective(eval1.feats, eval2.feats, cost, pot, spec.alpha,
                               eval1.weights, eval2.weights)
      .value;
}

TrajectoryHeatmap render_heatmap(const std::vector<Trajectory>& episodes,
                                 const GridWorldSpec& grid,
                                 const StateTransform& transform) {
  if (episodes.empty()) {
    throw std::invalid_argument("render_heatmap: no episodes");
  }
  TrajectoryHeatmap map;
  map.width = grid.width;
  map.height = grid.height;
  map.episodes = static_cast<int>(episodes.size());
  map.visits.assign(static_cast<size_t>(grid.width) * grid.height, 0);
  map.start = apply_transform(transform, grid.start);
  map.goal = apply_transform(transform, grid.goal);
  auto cell = [&](const GridState& s) {
    const int x = std::clamp(static_cast<int>(std::lround(s.x)), 0, grid.width - 1);
    const int y = std::clamp(static_cast<int>(std::lround(s.y)), 0, grid.height - 1);
    return y * grid.width + x;
  };
  for (const auto& traj : episodes) {
    for (const auto& s : traj.states) ++map.visits[cell(s)];
    for (size_t t = 0; t + 1 < traj.states.size(); ++t) {
      const int from = cell(traj.states[t]);
      const int to = cell(traj.states[t + 1]);
      if (from != to) ++map.edges[{from, to}];
    }
  }
  return map;
}

std::string heatmap_svg(const TrajectoryHeatmap& map) {
  constexpr int kCell = 40;
  constexpr int kPad = 20;
  const int w = map.width * kCell + 2 * kPad;
  const int h = map.height * kCell + 2 * kPad;
  long max_visit = 1;
  for (long v : map.visits) max_visit = std::max(max_visit, v);
  long max_edge = 1;
  for (const auto& [edge, count] : map.edges) max_edge = std::max(max_edge, count);

  auto cx = [&](int cell) { return kPad + (cell % map.width) * kCell + kCell / 2; };
  auto cy = [&](int cell) { return kPad + (cell / map.width) * kCell + kCell / 2; };

  std::ostringstream svg;
  svg.setf(std::ios::fixed);
  svg.precision(4);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h
      << "\">\n<rect width=\"" << w << "\" height=\"" << h
      << "\" fill=\"white\"/>\n";
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const long v = map.visits[static_cast<size_t>(y) * map.width + x];
      const double shade = static_cast<double>(v) / max_visit;
      svg << "<rect x=\"" << kPad + x * kCell << "\" y=\"" << kPad + y * kCell
          << "\" width=\"" << kCell << "\" height=\"" << kCell
          << "\" fill=\"#1f4e79\" fill-opacity=\"" << 0.85 * shade
          << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
    }
  }
  for (const auto& [edge, count] : map.edges) {
    const double opacity = 0.2 + 0.8 * static_cast<double>(count) / max_edge;
    svg << "<line x1=\"" << cx(edge.first) << "\" y1=\"" << cy(edge.first)
        << "\" x2=\"" << cx(edge.second) << "\" y2=\"" << cy(edge.second)
        << "\" stroke=\"#e07b00\" stroke-width=\"2\" stroke-opacity=\""
        << opacity << "\"/>\n";
  }
  svg.precision(1);
  svg << "<circle cx=\"" << kPad + map.start.x * kCell + kCell / 2.0
      << "\" cy=\"" << kPad + map.start.y * kCell + kCell / 2.0 << "\" r=\""
      << kCell / 3 << "\" fill=\"none\" stroke=\"#2e8b57\" stroke-width=\"3\"/>\n";
  svg << "<rect x=\"" << kPad + map.goal.x * kCell + kCell / 6.0 << "\" y=\""
      << kPad + map.goal.y * kCell + kCell / 6.0 << "\" width=\""
      << 2 * kCell / 3 << "\" height=\"" << 2 * kCell / 3
      << "\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"3\"/>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string heatmap_counts_csv(const TrajectoryHeatmap& map) {
  std::string out = "x,y,visits\n";
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      out += std::to_string(x) + "," + std::to_string(y) + "," +
             std::to_string(map.visits[static_cast<size_t>(y) * map.width + x]) +
             "\n";
    }
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> xs) {
  const size_t n = xs.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw std::invalid_argument("spearman: need two equal-length series");
  }
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double num = 0.0, vx = 0.0, vy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  if (vx == 0.0 || vy == 0.0) return 0.0;
  return num / std::sqrt(vx * vy);
}

}  // namespace undomap
