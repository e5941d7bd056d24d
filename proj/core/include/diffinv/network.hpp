#pragma once

#include <optional>
#include <span>
#include <vector>

#include "diffinv/field.hpp"
#include "diffinv/rng.hpp"

namespace diffinv {

enum class Act { SiLU, ReLU, Softplus };

struct TensorShape {
  int ch = 1, h = 1, w = 1;
  int size() const { return ch * h * w; }
  bool operator==(const TensorShape&) const = default;
};

/// One layer of a sequential network.
struct LayerSpec {
  enum class Kind { PixelBias, Conv2D, Dense, Activation, TimeEmbedAdd };
  Kind kind = Kind::Dense;

  int in_ch = 0, out_ch = 0, ksize = 0;  // Conv2D (odd kernel, same padding)
  int in_dim = 0, out_dim = 0;           // Dense (input flattened)
  Act act = Act::SiLU;                   // Activation
  int channels = 0, freqs = 8;           // TimeEmbedAdd (2*freqs sinusoidal features)

  static LayerSpec pixel_bias();
  static LayerSpec conv2d(int in_ch, int out_ch, int ksize = 3);
  static LayerSpec dense(int in_dim, int out_dim);
  static LayerSpec activation(Act a);
  static LayerSpec time_embed(int channels, int freqs = 8);
};

class Network;

/// Per-evaluation activation caches. Each concurrent evaluation of a shared
/// (read-only) network owns one Workspace.
class Workspace {
 public:
  Workspace() = default;

 private:
  friend class Network;
  std::vector<std::vector<double>> cached;  // per-layer backward inputs
  std::vector<double> flow, flow2, out;
  const Network* net = nullptr;
  bool forward_done = false;
};

/// Gradient buffers shape-matched to a network's weights.
struct GradBuffers {
  std::vector<std::vector<double>> g;
  void zero();
  void add(const GradBuffers& other);
};

/// Minimal trainable sequential network: dense and 2-D convolutional layers,
/// per-pixel bias, sinusoidal time embedding; reverse-mode gradients.
class Network {
 public:
  Network() = default;
  Network(TensorShape input, std::vector<LayerSpec> specs);

  const TensorShape& input_shape() const { return input_shape_; }
  const TensorShape& output_shape() const { return shapes_.back(); }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  bool uses_time() const { return uses_time_; }
  std::size_t num_weights() const;

  std::vector<std::vector<double>>& weights() { return weights_; }
  const std::vector<std::vector<double>>& weights() const { return weights_; }
  GradBuffers& grads() { return grads_; }
  void zero_grads() { grads_.zero(); }

  /// He-uniform for conv/dense kernels, zeros for biases.
  void init_weights(RngStream& rng);

  /// Deterministic forward pass; caches activations in `ws` for backward.
  std::span<const double> forward(std::span<const double> input, std::optional<double> t, Workspace& ws) const;

  /// Accumulates weight gradients into `sink` and returns the cotangent of
  /// the input. Requires a forward pass cached in `ws`.
  std::vector<double> backward(std::span<const double> out_cotangent, Workspace& ws, GradBuffers& sink) const;
  /// Same, accumulating into the network's own gradient buffers.
  std::vector<double> backward(std::span<const double> out_cotangent, Workspace& ws);
  /// Input cotangent only; weight gradients are not touched.
  std::vector<double> backward_input(std::span<const double> out_cotangent, Workspace& ws) const;

  GradBuffers make_grads() const;

 private:
  std::vector<double> backward_impl(std::span<const double> out_cotangent, Workspace& ws, GradBuffers* sink) const;

  TensorShape input_shape_;
  std::vector<LayerSpec> specs_;
  std::vector<TensorShape> shapes_;  // output shape per layer
  std::vector<std::vector<double>> weights_;
  GradBuffers grads_;
  bool uses_time_ = false;
};

/// Adam optimizer state (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
struct AdamState {
  explicit AdamState(const Network& net);
  AdamState() = default;
  std::vector<std::vector<double>> m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

/// Applies one Adam update from the network's gradient buffers, then zeroes
/// them.
void adam_step(Network& net, AdamState& state, double lr);

/// Score backbone: conv stack at constant resolution with the time embedding
/// added per-channel after the first convolution.
Network make_conv_score_net(GridShape grid, int channels = 32);
/// Forward-surrogate backbone: per-pixel bias layer, then a uniform-width
/// conv stack at constant resolution.
Network make_pixel_surrogate_net(GridShape grid, int channels = 32);
/// Dense score net for low-dimensional problems.
Network make_mlp_score_net(int dim, int hidden = 64);

}  // namespace diffinv
