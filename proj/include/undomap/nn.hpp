#pragma once

#include <span>
#include <vector>

#include "undomap/rng.hpp"

namespace undomap {

/// Architecture of a fully connected net: tanh hidden layers, linear output.
struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;

  bool operator==(const MlpSpec&) const = default;
};

/// Small feed-forward net over a flat parameter vector, with a hand-derived
/// backward pass.  Parameter layout per layer: weights row-major (out x in),
/// then biases (out).  Forward and backward are const and thread-safe.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpSpec spec);

  /// Weights ~ N(0, 1/fan_in), biases zero.
  static Mlp random(MlpSpec spec, Rng& rng);

  const MlpSpec& spec() const { return spec_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::vector<double> forward(std::span<const double> input) const;

  /// Convenience for scalar-output nets.
  double forward_scalar(std::span<const double> input) const;

  struct Backward {
    std::vector<double> param_grad;  // d(cot . output) / d params
    std::vector<double> input_grad;  // d(cot . output) / d input
  };

  /// Vector-Jacobian product: gradients of cot . output(input).
  Backward backward(std::span<const double> input,
                    std::span<const double> output_cotangent) const;

  bool params_finite() const;

 private:
  MlpSpec spec_;
  std::vector<double> params_;
  std::vector<int> layer_in_, layer_out_, layer_offset_;
};

int mlp_param_count(const MlpSpec& spec);

}  // namespace undomap
