#pragma once

// Dense tanh networks with per-block output heads, reverse-mode gradients and
// RMSprop. Batches are column-major: each column of an input matrix is one
// sample.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "popsynth/error.hpp"
#include "popsynth/random.hpp"

namespace popsynth {

using json = nlohmann::json;

enum class Activation { tanh, linear };

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
  Activation activation = Activation::tanh;

  Eigen::Index in() const noexcept { return weights.cols(); }
  Eigen::Index out() const noexcept { return weights.rows(); }
};

enum class HeadKind { linear, softmax };

struct OutputHead {
  HeadKind kind = HeadKind::linear;
  std::size_t offset = 0;
  std::size_t width = 1;
};

struct Mlp {
  std::vector<DenseLayer> layers;
  std::vector<OutputHead> heads;

  Eigen::Index input_width() const { return layers.front().in(); }
  Eigen::Index output_width() const { return layers.back().out(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
    return n;
  }

  /// Checks layer chaining and that heads tile the output exactly.
  void validate() const {
    if (layers.empty()) throw ConfigError("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].biases.size() != layers[l].out())
        throw ConfigError("layer " + std::to_string(l) + " bias width mismatch");
      if (l > 0 && layers[l].in() != layers[l - 1].out())
        throw ConfigError("layer " + std::to_string(l) + " input width does not chain");
    }
    std::size_t next = 0;
    for (const auto& h : heads) {
      if (h.offset != next || h.width == 0) throw ConfigError("output heads do not tile the output");
      next += h.width;
    }
    if (next != static_cast<std::size_t>(output_width()))
      throw ConfigError("output heads cover " + std::to_string(next) + " of " +
                        std::to_string(output_width()) + " outputs");
  }
};

/// Fully connected network with tanh hidden layers and a linear last layer.
/// `widths` lists input, hidden and output widths. Weights are uniform in
/// +-sqrt(6 / (fan_in + fan_out)), biases zero.
inline Mlp make_mlp(std::span<const std::size_t> widths, std::vector<OutputHead> heads, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("network needs input and output widths");
  Mlp mlp;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weights.resize(out, in);
    for (Eigen::Index c = 0; c < in; ++c)
      for (Eigen::Index r = 0; r < out; ++r) layer.weights(r, c) = dist(rng);
    layer.biases = Eigen::VectorXd::Zero(out);
    layer.activation = l + 2 == widths.size() ? Activation::linear : Activation::tanh;
    mlp.layers.push_back(std::move(layer));
  }
  if (heads.empty()) heads.push_back({HeadKind::linear, 0, widths.back()});
  mlp.heads = std::move(heads);
  mlp.validate();
  return mlp;
}

/// Softmax over rows [offset, offset+width) of every column, max-subtracted.
inline void apply_softmax_block(Eigen::MatrixXd& m, std::size_t offset, std::size_t width) {
  auto block = m.middleRows(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(width));
  for (Eigen::Index c = 0; c < block.cols(); ++c) {
    auto col = block.col(c);
    const double mx = col.maxCoeff();
    col = (col.array() - mx).exp().matrix();
    col /= col.sum();
  }
}

struct ForwardCache {
  // activations[0] is the input; activations[l+1] is layer l's output
  // before the heads are applied.
  std::vector<Eigen::MatrixXd> activations;
  Eigen::MatrixXd output;  // after heads
};

inline ForwardCache forward(const Mlp& mlp, const Eigen::MatrixXd& x) {
  if (x.rows() != mlp.input_width())
    throw SchemaMismatchError("network input width " + std::to_string(mlp.input_width()) +
                              ", got " + std::to_string(x.rows()));
  if (!x.allFinite()) throw NumericInputError("non-finite network input");
  ForwardCache cache;
  cache.activations.reserve(mlp.layers.size() + 1);
  cache.activations.push_back(x);
  for (const auto& layer : mlp.layers) {
    Eigen::MatrixXd y = layer.weights * cache.activations.back();
    y.colwise() += layer.biases;
    if (layer.activation == Activation::tanh) y = y.array().tanh().matrix();
    cache.activations.push_back(std::move(y));
  }
  cache.output = cache.activations.back();
  for (const auto& h : mlp.heads)
    if (h.kind == HeadKind::softmax) apply_softmax_block(cache.output, h.offset, h.width);
  return cache;
}

inline Eigen::VectorXd forward(const Mlp& mlp, const Eigen::VectorXd& x) {
  return forward(mlp, Eigen::MatrixXd(x)).output.col(0);
}

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd input;  // d loss / d input, one column per sample

  static MlpGradients zeros_like(const Mlp& mlp) {
    MlpGradients g;
    for (const auto& l : mlp.layers) {
      g.weights.push_back(Eigen::MatrixXd::Zero(l.out(), l.in()));
      g.biases.push_back(Eigen::VectorXd::Zero(l.out()));
    }
    return g;
  }
};

/// Reverse pass. `output_grad` is d loss / d (head outputs), same shape as
/// cache.output. Parameter gradients are summed over the batch columns.
inline MlpGradients backward(const Mlp& mlp, const ForwardCache& cache, const Eigen::MatrixXd& output_grad) {
  if (cache.activations.size() != mlp.layers.size() + 1)
    throw StaleCacheError("forward cache depth does not match network");
  for (std::size_t l = 0; l < mlp.layers.size(); ++l)
    if (cache.activations[l].rows() != mlp.layers[l].in() ||
        cache.activations[l + 1].rows() != mlp.layers[l].out())
      throw StaleCacheError("forward cache shape does not match layer " + std::to_string(l));
  if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols())
    throw StaleCacheError("output gradient shape does not match forward cache");

  // Through the heads: softmax Jacobian-vector product s * (g - <g, s>).
  Eigen::MatrixXd delta = output_grad;
  for (const auto& h : mlp.heads) {
    if (h.kind != HeadKind::softmax) continue;
    const auto off = static_cast<Eigen::Index>(h.offset), w = static_cast<Eigen::Index>(h.width);
    auto s = cache.output.middleRows(off, w);
    auto g = delta.middleRows(off, w);
    const Eigen::RowVectorXd dot = (s.array() * g.array()).colwise().sum();
    g = (s.array() * (g.rowwise() - dot).array()).matrix();
  }

  MlpGradients grads;
  grads.weights.resize(mlp.layers.size());
  grads.biases.resize(mlp.layers.size());
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    const auto& layer = mlp.layers[l];
    if (layer.activation == Activation::tanh)
      delta = (delta.array() * (1.0 - cache.activations[l + 1].array().square())).matrix();
    grads.weights[l] = delta * cache.activations[l].transpose();
    grads.biases[l] = delta.rowwise().sum();
    delta = layer.weights.transpose() * delta;
  }
  grads.input = std::move(delta);
  return grads;
}

// ---------------------------------------------------------------------------
// RMSprop

struct RmspropState {
  double learning_rate = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-8;
  std::vector<Eigen::MatrixXd> weight_acc;
  std::vector<Eigen::VectorXd> bias_acc;
};

inline RmspropState make_rmsprop(const Mlp& mlp, double learning_rate = 1e-3, double rho = 0.9,
                                 double epsilon = 1e-8) {
  RmspropState s{learning_rate, rho, epsilon, {}, {}};
  for (const auto& l : mlp.layers) {
    s.weight_acc.push_back(Eigen::MatrixXd::Zero(l.out(), l.in()));
    s.bias_acc.push_back(Eigen::VectorXd::Zero(l.out()));
  }
  return s;
}

namespace detail {

template <class Param, class Grad, class Acc>
void rmsprop_update(Param& p, const Grad& g, Acc& acc, const RmspropState& s, const std::string& block) {
  if (p.rows() != g.rows() || p.cols() != g.cols() || acc.rows() != g.rows() || acc.cols() != g.cols())
    throw StaleCacheError("optimizer shape mismatch in " + block);
  if (!g.allFinite()) throw DivergenceError("non-finite gradient in " + block);
  acc = s.rho * acc + (1.0 - s.rho) * g.cwiseAbs2();
  p.array() -= s.learning_rate * g.array() / (acc.array() + s.epsilon).sqrt();
}

}  // namespace detail

/// acc <- rho*acc + (1-rho)*g^2;  p <- p - lr*g/sqrt(acc + eps).
/// `name` labels the network in divergence errors.
inline void rmsprop_step(Mlp& mlp, const MlpGradients& grads, RmspropState& state,
                         const std::string& name = "network") {
  if (grads.weights.size() != mlp.layers.size() || state.weight_acc.size() != mlp.layers.size())
    throw StaleCacheError("optimizer state does not match " + name);
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const std::string tag = name + " layer " + std::to_string(l);
    detail::rmsprop_update(mlp.layers[l].weights, grads.weights[l], state.weight_acc[l], state,
                           tag + " weights");
    detail::rmsprop_update(mlp.layers[l].biases, grads.biases[l], state.bias_acc[l], state,
                           tag + " biases");
  }
}

// ---------------------------------------------------------------------------
// Checkpoint

inline json mlp_to_json(const Mlp& mlp) {
  json layers = json::array();
  for (const auto& l : mlp.layers) {
    std::vector<double> w(static_cast<std::size_t>(l.weights.size()));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), l.out(), l.in()) = l.weights;
    layers.push_back({{"in", l.in()},
                      {"out", l.out()},
                      {"activation", l.activation == Activation::tanh ? "tanh" : "linear"},
                      {"weights", w},
                      {"biases", std::vector<double>(l.biases.data(), l.biases.data() + l.biases.size())}});
  }
  json heads = json::array();
  for (const auto& h : mlp.heads)
    heads.push_back({{"kind", h.kind == HeadKind::softmax ? "softmax" : "linear"},
                     {"offset", h.offset},
                     {"width", h.width}});
  return {{"layers", layers}, {"heads", heads}};
}

inline Mlp mlp_from_json(const json& j) {
  Mlp mlp;
  for (const auto& jl : j.at("layers")) {
    DenseLayer l;
    const auto in = jl.at("in").get<Eigen::Index>(), out = jl.at("out").get<Eigen::Index>();
    const auto w = jl.at("weights").get<std::vector<double>>();
    const auto b = jl.at("biases").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out)
      throw ConfigError("checkpoint layer has inconsistent parameter counts");
    l.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), out, in);
    l.biases = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
    l.activation = jl.at("activation").get<std::string>() == "tanh" ? Activation::tanh : Activation::linear;
    mlp.layers.push_back(std::move(l));
  }
  for (const auto& jh : j.at("heads"))
    mlp.heads.push_back({jh.at("kind").get<std::string>() == "softmax" ? HeadKind::softmax : HeadKind::linear,
                         jh.at("offset").get<std::size_t>(), jh.at("width").get<std::size_t>()});
  mlp.validate();
  return mlp;
}

}  // namespace popsynth
