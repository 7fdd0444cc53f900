// Times the OpenMP kernels against their serial reference implementations and
// verifies that both produce bitwise-identical results on the same inputs.
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "undomap/batch_ops.hpp"
#include "undomap/divergences.hpp"
#include "undomap/policy.hpp"

using namespace undomap;

namespace {

double seconds_of(const std::function<void()>& fn, int repeats) {
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(stop - start).count() / repeats;
}

void report(const std::string& name, double serial, double parallel,
            bool identical) {
  std::cout << std::left << std::setw(22) << name << std::right << std::fixed
            << std::setprecision(2) << std::setw(10) << serial * 1e3 << " ms"
            << std::setw(10) << parallel * 1e3 << " ms" << std::setw(9)
            << std::setprecision(2) << serial / parallel << "x"
            << "   " << (identical ? "bitwise equal" : "MISMATCH") << "\n";
}

template <typename T>
bool bits_equal(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i], &b[i], sizeof(T)) != 0) return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark: serial reference vs OpenMP"};
  int episodes = 256;
  int repeats = 3;
  app.add_option("--episodes", episodes, "rollout batch size");
  app.add_option("--repeats", repeats, "timing repeats");
  CLI11_PARSE(app, argc, argv);

  bool all_ok = true;
  const GridWorldSpec spec;
  Rng rng(20240817);
  const Policy pol = Policy::random(spec, rng);
  const auto sampler = pol.sampler();

  // Batched rollouts.
  std::vector<Trajectory> roll_par, roll_ser;
  const double t_roll_par = seconds_of(
      [&] {
        roll_par = batch_ops::rollout_batch(spec, StateTransform::identity(),
                                            sampler, 7, "bench", episodes);
      },
      repeats);
  const double t_roll_ser = seconds_of(
      [&] {
        roll_ser = batch_ops::reference::rollout_batch(
            spec, StateTransform::identity(), sampler, 7, "bench", episodes);
      },
      repeats);
  bool ok = roll_par.size() == roll_ser.size();
  for (size_t i = 0; ok && i < roll_par.size(); ++i) {
    ok = bits_equal(roll_par[i].states, roll_ser[i].states) &&
         roll_par[i].actions == roll_ser[i].actions &&
         bits_equal(roll_par[i].rewards, roll_ser[i].rewards);
  }
  all_ok = all_ok && ok;
  report("rollout_batch", t_roll_ser, t_roll_par, ok);

  // Pairwise dtw costs over the collected episodes.
  std::vector<std::vector<GridState>> seqs;
  for (const auto& traj : roll_par) seqs.push_back(traj.states);
  std::vector<double> cost_par, cost_ser;
  const double t_cost_par = seconds_of(
      [&] { cost_par = batch_ops::pairwise_costs(seqs, seqs); }, repeats);
  const double t_cost_ser = seconds_of(
      [&] { cost_ser = batch_ops::reference::pairwise_costs(seqs, seqs); },
      repeats);
  ok = bits_equal(cost_par, cost_ser);
  all_ok = all_ok && ok;
  report("pairwise_costs", t_cost_ser, t_cost_par, ok);

  // Batched potential evaluation and weighted parameter gradients.
  const Featurizer feat{CostMode::TrajectoryDTW, spec};
  std::vector<std::vector<double>> inputs;
  for (const auto& traj : roll_par) inputs.push_back(feat.features(traj));
  Rng prng(99);
  DualPotentials pot = DualPotentials::random(feat.dim(), {64, 64}, prng);
  std::vector<double> fwd_par, fwd_ser;
  const double t_fwd_par = seconds_of(
      [&] { fwd_par = batch_ops::forward_scalar_batch(pot.h, inputs); }, repeats);
  const double t_fwd_ser = seconds_of(
      [&] { fwd_ser = batch_ops::reference::forward_scalar_batch(pot.h, inputs); },
      repeats);
  ok = bits_equal(fwd_par, fwd_ser);
  all_ok = all_ok && ok;
  report("forward_scalar_batch", t_fwd_ser, t_fwd_par, ok);

  std::vector<double> weights(inputs.size());
  for (size_t i = 0; i < weights.size(); ++i) {
    weights[i] = (i % 7 == 0) ? 0.0 : 1.0 / static_cast<double>(i + 1);
  }
  std::vector<double> grad_par, grad_ser;
  const double t_grad_par = seconds_of(
      [&] { grad_par = batch_ops::weighted_param_grad(pot.h, inputs, weights); },
      repeats);
  const double t_grad_ser = seconds_of(
      [&] {
        grad_ser = batch_ops::reference::weighted_param_grad(pot.h, inputs, weights);
      },
      repeats);
  ok = bits_equal(grad_par, grad_ser);
  all_ok = all_ok && ok;
  report("weighted_param_grad", t_grad_ser, t_grad_par, ok);

  // Weighted dtw subgradients on a sparse weight matrix.
  const size_t n = std::min<size_t>(seqs.size(), 64);
  const std::vector<std::vector<GridState>> sub(seqs.begin(), seqs.begin() + n);
  std::vector<double> pair_w(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; j += 3) pair_w[i * n + j] = 1.0 / (1.0 + i + j);
  }
  std::vector<std::vector<Vec2>> sg_par, sg_ser;
  const double t_sg_par = seconds_of(
      [&] { sg_par = batch_ops::weighted_cost_subgrad(sub, sub, pair_w); }, repeats);
  const double t_sg_ser = seconds_of(
      [&] { sg_ser = batch_ops::reference::weighted_cost_subgrad(sub, sub, pair_w); },
      repeats);
  ok = sg_par.size() == sg_ser.size();
  for (size_t j = 0; ok && j < sg_par.size(); ++j) ok = bits_equal(sg_par[j], sg_ser[j]);
  all_ok = all_ok && ok;
  report("weighted_cost_subgrad", t_sg_ser, t_sg_par, ok);

  if (!all_ok) {
    std::cerr << "kernel outputs diverged from the serial reference\n";
    return 1;
  }
  return 0;
}
