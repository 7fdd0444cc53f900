#include "undomap/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace undomap {

namespace {

std::vector<int> layer_dims(const MlpSpec& spec) {
  std::vector<int> dims;
  dims.push_back(spec.input_dim);
  for (int h : spec.hidden) dims.push_back(h);
  dims.push_back(spec.output_dim);
  return dims;
}

}  // namespace

int mlp_param_count(const MlpSpec& spec) {
  auto dims = layer_dims(spec);
  int n = 0;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    n += dims[l + 1] * dims[l] + dims[l + 1];
  }
  return n;
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  if (spec_.input_dim <= 0 || spec_.output_dim <= 0) {
    throw std::invalid_argument("mlp dimensions must be positive");
  }
  for (int h : spec_.hidden) {
    if (h <= 0) throw std::invalid_argument("mlp dimensions must be positive");
  }
  auto dims = layer_dims(spec_);
  int offset = 0;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    layer_in_.push_back(dims[l]);
    layer_out_.push_back(dims[l + 1]);
    layer_offset_.push_back(offset);
    offset += dims[l + 1] * dims[l] + dims[l + 1];
  }
  params_.assign(offset, 0.0);
}

Mlp Mlp::random(MlpSpec spec, Rng& rng) {
  Mlp net(std::move(spec));
  for (size_t l = 0; l < net.layer_in_.size(); ++l) {
    const int in = net.layer_in_[l], out = net.layer_out_[l];
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    double* w = net.params_.data() + net.layer_offset_[l];
    for (int i = 0; i < out * in; ++i) w[i] = scale * rng.normal();
    // biases stay zero
  }
  return net;
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
  if (static_cast<int>(input.size()) != spec_.input_dim) {
    throw std::invalid_argument("mlp input size mismatch");
  }
  std::vector<double> act(input.begin(), input.end());
  std::vector<double> next;
  const size_t layers = layer_in_.size();
  for (size_t l = 0; l < layers; ++l) {
    const int in = layer_in_[l], out = layer_out_[l];
    const double* w = params_.data() + layer_offset_[l];
    const double* b = w + out * in;
    next.assign(out, 0.0);
    for (int o = 0; o < out; ++o) {
      double z = b[o];
      const double* row = w + o * in;
      for (int i = 0; i < in; ++i) z += row[i] * act[i];
      next[o] = (l + 1 < layers) ? std::tanh(z) : z;
    }
    act.swap(next);
  }
  return act;
}

double Mlp::forward_scalar(std::span<const double> input) const {
  if (spec_.output_dim != 1) {
    throw std::logic_error("forward_scalar requires output_dim == 1");
  }
  return forward(input)[0];
}

Mlp::Backward Mlp::backward(std::span<const double> input,
                            std::span<const double> output_cotangent) const {
  if (static_cast<int>(input.size()) != spec_.input_dim) {
    throw std::invalid_argument("mlp input size mismatch");
  }
  if (static_cast<int>(output_cotangent.size()) != spec_.output_dim) {
    throw std::invalid_argument("mlp cotangent size mismatch");
  }
  const size_t layers = layer_in_.size();

  // Forward, caching each layer's post-activation input.
  std::vector<std::vector<double>> acts(layers + 1);
  acts[0].assign(input.begin(), input.end());
  for (size_t l = 0; l < layers; ++l) {
    const int in = layer_in_[l], out = layer_out_[l];
    const double* w = params_.data() + layer_offset_[l];
    const double* b = w + out * in;
    acts[l + 1].assign(out, 0.0);
    for (int o = 0; o < out; ++o) {
      double z = b[o];
      const double* row = w + o * in;
      for (int i = 0; i < in; ++i) z += row[i] * acts[l][i];
      acts[l + 1][o] = (l + 1 < layers) ? std::tanh(z) : z;
    }
  }

  Backward result;
  result.param_grad.assign(params_.size(), 0.0);
  // delta := d(cot . output) / d(pre-activation of current layer).
  std::vector<double> delta(output_cotangent.begin(), output_cotangent.end());
  std::vector<double> prev_delta;
  for (size_t li = layers; li-- > 0;) {
    const int in = layer_in_[li], out = layer_out_[li];
    const double* w = params_.data() + layer_offset_[li];
    double* wg = result.param_grad.data() + layer_offset_[li];
    double* bg = wg + out * in;
    if (li + 1 < layers) {
      // Hidden layer: fold tanh' = 1 - a^2 into delta.
      for (int o = 0; o < out; ++o) {
        const double a = acts[li + 1][o];
        delta[o] *= 1.0 - a * a;
      }
    }
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      double* row = wg + o * in;
      for (int i = 0; i < in; ++i) row[i] += d * acts[li][i];
      bg[o] += d;
    }
    prev_delta.assign(in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      const double* row = w + o * in;
      for (int i = 0; i < in; ++i) prev_delta[i] += d * row[i];
    }
    delta.swap(prev_delta);
  }
  result.input_grad = std::move(delta);
  return result;
}

bool Mlp::params_finite() const {
  for (double p : params_) {
    if (!std::isfinite(p)) return false;
  }
  return true;
}

}  // namespace undomap
