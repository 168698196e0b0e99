#pragma once

// Feedforward price network: ReLU hidden layers, Bernoulli dropout on the last
// hidden layer only, linear 24-unit head, MSE loss with hand-derived gradients.
//
// Examples are stored column-wise; a single input is a one-column batch.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "epf/common.hpp"
#include "epf/features.hpp"

namespace epf {

struct MlpConfig {
  int input_dim = layout::kDim;
  int output_dim = kHours;
  int hidden_layers = 2;  // L
  int hidden_dim = 64;    // d
  double dropout_rate = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim < 1 || output_dim < 1 || hidden_layers < 1 || hidden_dim < 1)
      throw ConfigError("network dimensions must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  }
  double keep_scale() const { return 1.0 / (1.0 - dropout_rate); }
  bool operator==(const MlpConfig&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Also used as the gradient container and the Adam moment container.
struct MlpParams {
  std::vector<DenseLayer> hidden;
  DenseLayer output;

  MlpParams zeros_like() const {
    MlpParams z;
    for (const auto& l : hidden) z.hidden.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                                                     Eigen::VectorXd::Zero(l.bias.size())});
    z.output = {Eigen::MatrixXd::Zero(output.weight.rows(), output.weight.cols()),
                Eigen::VectorXd::Zero(output.bias.size())};
    return z;
  }
  int hidden_dim() const { return int(hidden.back().weight.rows()); }
  std::size_t parameter_count() const {
    std::size_t n = std::size_t(output.weight.size() + output.bias.size());
    for (const auto& l : hidden) n += std::size_t(l.weight.size() + l.bias.size());
    return n;
  }
  bool operator==(const MlpParams& o) const {
    if (hidden.size() != o.hidden.size()) return false;
    for (std::size_t i = 0; i < hidden.size(); ++i)
      if (hidden[i].weight != o.hidden[i].weight || hidden[i].bias != o.hidden[i].bias) return false;
    return output.weight == o.output.weight && output.bias == o.output.bias;
  }
};

using Gradients = MlpParams;

// Visits every tensor of one or more parameter-shaped containers in a fixed
// order, passing a stable name ("W1", "b1", ..., "W_out", "b_out").
template <typename Fn, typename First, typename... Rest>
void for_each_tensor(Fn&& fn, First& first, Rest&... rest) {
  for (std::size_t l = 0; l < first.hidden.size(); ++l) {
    const std::string idx = std::to_string(l + 1);
    fn("W" + idx, first.hidden[l].weight, rest.hidden[l].weight...);
    fn("b" + idx, first.hidden[l].bias, rest.hidden[l].bias...);
  }
  fn(std::string("W_out"), first.output.weight, rest.output.weight...);
  fn(std::string("b_out"), first.output.bias, rest.output.bias...);
}

// He initialization: N(0, 2/fan_in) weights, zero biases.
inline MlpParams init_params(const MlpConfig& config, std::mt19937_64& rng) {
  config.validate();
  MlpParams p;
  auto layer = [&](int out, int in) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / in));
    DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = normal(rng);
    return l;
  };
  int prev = config.input_dim;
  for (int l = 0; l < config.hidden_layers; ++l) {
    p.hidden.push_back(layer(config.hidden_dim, prev));
    prev = config.hidden_dim;
  }
  p.output = layer(config.output_dim, prev);
  return p;
}

inline MlpParams init_params(const MlpConfig& config) {
  std::mt19937_64 rng(config.seed);
  return init_params(config, rng);
}

// Keep-masks for the last hidden layer, one column per example, entries in {0,1}.
struct DropoutMask {
  Eigen::MatrixXd keep;  // d x batch
  double scale = 1.0;    // inverted-dropout factor 1/(1-rate)
};

inline double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

inline DropoutMask sample_mask(int hidden_dim, Eigen::Index batch, double rate, std::mt19937_64& rng) {
  DropoutMask m{Eigen::MatrixXd(hidden_dim, batch), 1.0 / (1.0 - rate)};
  const double keep = 1.0 - rate;
  for (Eigen::Index c = 0; c < batch; ++c)
    for (Eigen::Index r = 0; r < hidden_dim; ++r) m.keep(r, c) = uniform01(rng) < keep ? 1.0 : 0.0;
  return m;
}

struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> hidden;  // post-ReLU activations h_1..h_L, before dropout
  Eigen::MatrixXd dropped;              // (m . h_L) * s, or h_L for a deterministic pass
  bool masked = false;
};

struct ForwardPass {
  Eigen::MatrixXd output;
  ForwardCache cache;
};

namespace detail {
inline ForwardPass forward_impl(const MlpParams& params, const Eigen::MatrixXd& x, const DropoutMask* mask) {
  if (params.hidden.empty()) throw ModelError("network has no hidden layers");
  if (x.rows() != params.hidden.front().weight.cols())
    throw ModelError("input dimension " + std::to_string(x.rows()) + " does not match network input " +
                     std::to_string(params.hidden.front().weight.cols()));
  if (!x.allFinite()) throw ModelError("non-finite network input");
  ForwardPass pass;
  pass.cache.input = x;
  const Eigen::MatrixXd* prev = &pass.cache.input;
  pass.cache.hidden.reserve(params.hidden.size());
  for (const auto& layer : params.hidden) {
    Eigen::MatrixXd z = layer.weight * *prev;
    z.colwise() += layer.bias;
    pass.cache.hidden.push_back(z.cwiseMax(0.0));
    prev = &pass.cache.hidden.back();
  }
  if (mask) {
    if (mask->keep.rows() != prev->rows() || mask->keep.cols() != prev->cols())
      throw ModelError("dropout mask shape does not match last hidden layer");
    pass.cache.dropped = prev->cwiseProduct(mask->keep) * mask->scale;
    pass.cache.masked = true;
  } else {
    pass.cache.dropped = *prev;
  }
  pass.output = params.output.weight * pass.cache.dropped;
  pass.output.colwise() += params.output.bias;
  return pass;
}
}  // namespace detail

// Deterministic pass: all units kept, no scaling.
inline ForwardPass forward(const MlpParams& params, const Eigen::MatrixXd& x) {
  return detail::forward_impl(params, x, nullptr);
}

inline ForwardPass forward(const MlpParams& params, const Eigen::MatrixXd& x, const DropoutMask& mask) {
  return detail::forward_impl(params, x, &mask);
}

// Mean over hours (and examples) of squared error.
inline double mse_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
    throw ModelError("prediction/target shape mismatch");
  return (prediction - target).squaredNorm() / double(prediction.size());
}

// Gradient of mse_loss(forward(x, mask), target) with the mask held fixed.
inline Gradients backward(const MlpParams& params, const ForwardCache& cache, const Eigen::MatrixXd& output,
                          const Eigen::MatrixXd& target, const DropoutMask* mask = nullptr) {
  const std::size_t L = params.hidden.size();
  if (cache.hidden.size() != L || cache.dropped.rows() != params.output.weight.cols() ||
      output.rows() != params.output.weight.rows() || output.cols() != cache.input.cols())
    throw ModelError("forward cache does not match parameters");
  if (cache.masked != (mask != nullptr)) throw ModelError("dropout mask differs from forward pass");
  if (target.rows() != output.rows() || target.cols() != output.cols())
    throw ModelError("prediction/target shape mismatch");

  Gradients g = params.zeros_like();
  const Eigen::MatrixXd delta_out = (output - target) * (2.0 / double(output.size()));
  g.output.weight = delta_out * cache.dropped.transpose();
  g.output.bias = delta_out.rowwise().sum();

  Eigen::MatrixXd delta = params.output.weight.transpose() * delta_out;
  if (mask) delta = delta.cwiseProduct(mask->keep) * mask->scale;
  for (std::size_t k = L; k-- > 0;) {
    delta = (cache.hidden[k].array() > 0.0).select(delta, 0.0);
    const Eigen::MatrixXd& below = k == 0 ? cache.input : cache.hidden[k - 1];
    g.hidden[k].weight = delta * below.transpose();
    g.hidden[k].bias = delta.rowwise().sum();
    if (k > 0) delta = params.hidden[k].weight.transpose() * delta;
  }
  return g;
}

inline Gradients backward(const MlpParams& params, const ForwardPass& pass, const Eigen::MatrixXd& target) {
  return backward(params, pass.cache, pass.output, target, nullptr);
}

inline Gradients backward(const MlpParams& params, const ForwardPass& pass, const Eigen::MatrixXd& target,
                          const DropoutMask& mask) {
  return backward(params, pass.cache, pass.output, target, &mask);
}

}  // namespace epf
