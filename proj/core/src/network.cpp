#include "diffinv/network.hpp"

#include <cmath>
#include <cstring>

#include "diffinv/error.hpp"

namespace diffinv {

LayerSpec LayerSpec::pixel_bias() {
  LayerSpec s;
  s.kind = Kind::PixelBias;
  return s;
}

LayerSpec LayerSpec::conv2d(int in_ch, int out_ch, int ksize) {
  LayerSpec s;
  s.kind = Kind::Conv2D;
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.ksize = ksize;
  return s;
}

LayerSpec LayerSpec::dense(int in_dim, int out_dim) {
  LayerSpec s;
  s.kind = Kind::Dense;
  s.in_dim = in_dim;
  s.out_dim = out_dim;
  return s;
}

LayerSpec LayerSpec::activation(Act a) {
  LayerSpec s;
  s.kind = Kind::Activation;
  s.act = a;
  return s;
}

LayerSpec LayerSpec::time_embed(int channels, int freqs) {
  LayerSpec s;
  s.kind = Kind::TimeEmbedAdd;
  s.channels = channels;
  s.freqs = freqs;
  return s;
}

void GradBuffers::zero() {
  for (auto& v : g) std::fill(v.begin(), v.end(), 0.0);
}

void GradBuffers::add(const GradBuffers& other) {
  for (std::size_t l = 0; l < g.size(); ++l)
    for (std::size_t i = 0; i < g[l].size(); ++i) g[l][i] += other.g[l][i];
}

namespace {

std::size_t weight_count(const LayerSpec& s, const TensorShape& in) {
  switch (s.kind) {
    case LayerSpec::Kind::PixelBias:
      return static_cast<std::size_t>(in.size());
    case LayerSpec::Kind::Conv2D:
      return static_cast<std::size_t>(s.out_ch) * s.in_ch * s.ksize * s.ksize + s.out_ch;
    case LayerSpec::Kind::Dense:
      return static_cast<std::size_t>(s.out_dim) * s.in_dim + s.out_dim;
    case LayerSpec::Kind::Activation:
      return 0;
    case LayerSpec::Kind::TimeEmbedAdd:
      return static_cast<std::size_t>(s.channels) * 2 * s.freqs + s.channels;
  }
  return 0;
}

TensorShape infer_shape(const LayerSpec& s, const TensorShape& in) {
  switch (s.kind) {
    case LayerSpec::Kind::PixelBias:
      return in;
    case LayerSpec::Kind::Conv2D:
      if (in.ch != s.in_ch) throw ShapeError("Conv2D: channel mismatch");
      if (s.ksize % 2 == 0 || s.ksize < 1) throw ConfigError("Conv2D: kernel size must be odd");
      return TensorShape{s.out_ch, in.h, in.w};
    case LayerSpec::Kind::Dense:
      if (in.size() != s.in_dim) throw ShapeError("Dense: input dimension mismatch");
      return TensorShape{s.out_dim, 1, 1};
    case LayerSpec::Kind::Activation:
      return in;
    case LayerSpec::Kind::TimeEmbedAdd:
      if (in.ch != s.channels) throw ShapeError("TimeEmbedAdd: channel mismatch");
      return in;
  }
  throw ConfigError("unknown layer kind");
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double act_eval(Act a, double x) {
  switch (a) {
    case Act::SiLU:
      return x * sigmoid(x);
    case Act::ReLU:
      return x > 0.0 ? x : 0.0;
    case Act::Softplus:
      return x > 30.0 ? x : std::log1p(std::exp(x));
  }
  return x;
}

inline double act_grad(Act a, double x) {
  switch (a) {
    case Act::SiLU: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Act::ReLU:
      return x > 0.0 ? 1.0 : 0.0;
    case Act::Softplus:
      return sigmoid(x);
  }
  return 1.0;
}

void time_features(double t, int freqs, std::vector<double>& phi) {
  phi.resize(static_cast<std::size_t>(2 * freqs));
  double omega = std::acos(-1.0);  // pi, doubled per octave
  for (int k = 0; k < freqs; ++k) {
    phi[static_cast<std::size_t>(2 * k)] = std::sin(omega * t);
    phi[static_cast<std::size_t>(2 * k + 1)] = std::cos(omega * t);
    omega *= 2.0;
  }
}

}  // namespace

Network::Network(TensorShape input, std::vector<LayerSpec> specs)
    : input_shape_(input), specs_(std::move(specs)) {
  TensorShape cur = input_shape_;
  shapes_.reserve(specs_.size());
  weights_.reserve(specs_.size());
  for (const LayerSpec& s : specs_) {
    weights_.emplace_back(weight_count(s, cur), 0.0);
    cur = infer_shape(s, cur);
    shapes_.push_back(cur);
    if (s.kind == LayerSpec::Kind::TimeEmbedAdd) uses_time_ = true;
  }
  if (shapes_.empty()) throw ConfigError("Network: needs at least one layer");
  grads_ = make_grads();
}

GradBuffers Network::make_grads() const {
  GradBuffers gb;
  gb.g.reserve(weights_.size());
  for (const auto& w : weights_) gb.g.emplace_back(w.size(), 0.0);
  return gb;
}

std::size_t Network::num_weights() const {
  std::size_t n = 0;
  for (const auto& w : weights_) n += w.size();
  return n;
}

void Network::init_weights(RngStream& rng) {
  TensorShape cur = input_shape_;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    const LayerSpec& s = specs_[l];
    auto& w = weights_[l];
    std::fill(w.begin(), w.end(), 0.0);
    double limit = 0.0;
    std::size_t kernel = 0;
    switch (s.kind) {
      case LayerSpec::Kind::Conv2D:
        kernel = static_cast<std::size_t>(s.out_ch) * s.in_ch * s.ksize * s.ksize;
        limit = std::sqrt(6.0 / (s.in_ch * s.ksize * s.ksize));
        break;
      case LayerSpec::Kind::Dense:
        kernel = static_cast<std::size_t>(s.out_dim) * s.in_dim;
        limit = std::sqrt(6.0 / s.in_dim);
        break;
      case LayerSpec::Kind::TimeEmbedAdd:
        kernel = static_cast<std::size_t>(s.channels) * 2 * s.freqs;
        limit = std::sqrt(6.0 / (2.0 * s.freqs));
        break;
      default:
        break;  // bias-only layers start at zero
    }
    for (std::size_t i = 0; i < kernel; ++i) w[i] = limit * (2.0 * rng.uniform() - 1.0);
    cur = shapes_[l];
  }
  (void)cur;
}

std::span<const double> Network::forward(std::span<const double> input, std::optional<double> t, Workspace& ws) const {
  if (static_cast<int>(input.size()) != input_shape_.size())
    throw ShapeError("Network::forward: input size mismatch");
  if (uses_time_ && !t) throw StateError("Network::forward: network requires a time value");

  ws.net = this;
  ws.cached.resize(specs_.size());
  ws.flow.assign(input.begin(), input.end());
  TensorShape cur = input_shape_;

  for (std::size_t l = 0; l < specs_.size(); ++l) {
    const LayerSpec& s = specs_[l];
    const auto& w = weights_[l];
    auto& cache = ws.cached[l];
    switch (s.kind) {
      case LayerSpec::Kind::PixelBias: {
        cache.clear();
        for (std::size_t i = 0; i < ws.flow.size(); ++i) ws.flow[i] += w[i];
        break;
      }
      case LayerSpec::Kind::Conv2D: {
        const int p = s.ksize / 2;
        const int hp = cur.h + 2 * p, wp = cur.w + 2 * p;
        cache.assign(static_cast<std::size_t>(s.in_ch) * hp * wp, 0.0);
        for (int c = 0; c < s.in_ch; ++c)
          for (int y = 0; y < cur.h; ++y)
            std::memcpy(&cache[(static_cast<std::size_t>(c) * hp + y + p) * wp + p],
                        &ws.flow[(static_cast<std::size_t>(c) * cur.h + y) * cur.w],
                        sizeof(double) * cur.w);
        ws.flow2.assign(static_cast<std::size_t>(s.out_ch) * cur.h * cur.w, 0.0);
        const double* bias = &w[static_cast<std::size_t>(s.out_ch) * s.in_ch * s.ksize * s.ksize];
        for (int oc = 0; oc < s.out_ch; ++oc) {
          double* outp = &ws.flow2[static_cast<std::size_t>(oc) * cur.h * cur.w];
          for (int i = 0; i < cur.h * cur.w; ++i) outp[i] = bias[oc];
          for (int ic = 0; ic < s.in_ch; ++ic) {
            const double* wk = &w[((static_cast<std::size_t>(oc) * s.in_ch + ic) * s.ksize) * s.ksize];
            const double* inp = &cache[static_cast<std::size_t>(ic) * hp * wp];
            for (int ky = 0; ky < s.ksize; ++ky) {
              for (int kx = 0; kx < s.ksize; ++kx) {
                const double wv = wk[ky * s.ksize + kx];
                for (int y = 0; y < cur.h; ++y) {
                  const double* row = inp + (y + ky) * wp + kx;
                  double* orow = outp + y * cur.w;
#pragma omp simd
                  for (int x = 0; x < cur.w; ++x) orow[x] += wv * row[x];
                }
              }
            }
          }
        }
        ws.flow.swap(ws.flow2);
        break;
      }
      case LayerSpec::Kind::Dense: {
        cache = ws.flow;
        ws.flow2.assign(static_cast<std::size_t>(s.out_dim), 0.0);
        const double* bias = &w[static_cast<std::size_t>(s.out_dim) * s.in_dim];
        for (int o = 0; o < s.out_dim; ++o) {
          const double* row = &w[static_cast<std::size_t>(o) * s.in_dim];
          double acc = bias[o];
#pragma omp simd reduction(+ : acc)
          for (int i = 0; i < s.in_dim; ++i) acc += row[i] * cache[static_cast<std::size_t>(i)];
          ws.flow2[static_cast<std::size_t>(o)] = acc;
        }
        ws.flow.swap(ws.flow2);
        break;
      }
      case LayerSpec::Kind::Activation: {
        cache = ws.flow;
        for (double& x : ws.flow) x = act_eval(s.act, x);
        break;
      }
      case LayerSpec::Kind::TimeEmbedAdd: {
        time_features(*t, s.freqs, cache);
        const int nf = 2 * s.freqs;
        const int pix = cur.h * cur.w;
        const double* bias = &w[static_cast<std::size_t>(s.channels) * nf];
        for (int c = 0; c < s.channels; ++c) {
          const double* row = &w[static_cast<std::size_t>(c) * nf];
          double e = bias[c];
          for (int f = 0; f < nf; ++f) e += row[f] * cache[static_cast<std::size_t>(f)];
          double* chan = &ws.flow[static_cast<std::size_t>(c) * pix];
          for (int i = 0; i < pix; ++i) chan[i] += e;
        }
        break;
      }
    }
    cur = shapes_[l];
  }
  ws.out = ws.flow;
  ws.forward_done = true;
  return ws.out;
}

std::vector<double> Network::backward_impl(std::span<const double> out_cotangent, Workspace& ws, GradBuffers* sink) const {
  if (!ws.forward_done || ws.net != this)
    throw StateError("Network::backward: no cached forward pass for this network");
  if (static_cast<int>(out_cotangent.size()) != output_shape().size())
    throw ShapeError("Network::backward: cotangent size mismatch");

  std::vector<double> cot(out_cotangent.begin(), out_cotangent.end());
  for (int l = static_cast<int>(specs_.size()) - 1; l >= 0; --l) {
    const LayerSpec& s = specs_[static_cast<std::size_t>(l)];
    const auto& w = weights_[static_cast<std::size_t>(l)];
    const auto& cache = ws.cached[static_cast<std::size_t>(l)];
    double* gw = sink ? sink->g[static_cast<std::size_t>(l)].data() : nullptr;
    const TensorShape in_shape = (l == 0) ? input_shape_ : shapes_[static_cast<std::size_t>(l) - 1];
    switch (s.kind) {
      case LayerSpec::Kind::PixelBias: {
        if (gw)
          for (std::size_t i = 0; i < cot.size(); ++i) gw[i] += cot[i];
        break;  // input cotangent unchanged
      }
      case LayerSpec::Kind::Conv2D: {
        const int p = s.ksize / 2;
        const int h = in_shape.h, wd = in_shape.w;
        const int hp = h + 2 * p, wp = wd + 2 * p;
        // cotangent w.r.t. padded input
        ws.flow2.assign(static_cast<std::size_t>(s.in_ch) * hp * wp, 0.0);
        const std::size_t bias_off = static_cast<std::size_t>(s.out_ch) * s.in_ch * s.ksize * s.ksize;
        for (int oc = 0; oc < s.out_ch; ++oc) {
          const double* dout = &cot[static_cast<std::size_t>(oc) * h * wd];
          for (int ic = 0; ic < s.in_ch; ++ic) {
            const std::size_t woff = (static_cast<std::size_t>(oc) * s.in_ch + ic) * s.ksize * s.ksize;
            double* dinp = &ws.flow2[static_cast<std::size_t>(ic) * hp * wp];
            for (int ky = 0; ky < s.ksize; ++ky) {
              for (int kx = 0; kx < s.ksize; ++kx) {
                const double wv = w[woff + static_cast<std::size_t>(ky) * s.ksize + kx];
                for (int y = 0; y < h; ++y) {
                  double* drow = dinp + (y + ky) * wp + kx;
                  const double* orow = dout + y * wd;
#pragma omp simd
                  for (int x = 0; x < wd; ++x) drow[x] += wv * orow[x];
                }
              }
            }
          }
        }
        if (gw) {
          for (int oc = 0; oc < s.out_ch; ++oc) {
            const double* dout = &cot[static_cast<std::size_t>(oc) * h * wd];
            double acc = 0.0;
#pragma omp simd reduction(+ : acc)
            for (int i = 0; i < h * wd; ++i) acc += dout[i];
            gw[bias_off + oc] += acc;
            for (int ic = 0; ic < s.in_ch; ++ic) {
              const std::size_t woff = (static_cast<std::size_t>(oc) * s.in_ch + ic) * s.ksize * s.ksize;
              const double* inp = &cache[static_cast<std::size_t>(ic) * hp * wp];
              for (int ky = 0; ky < s.ksize; ++ky) {
                for (int kx = 0; kx < s.ksize; ++kx) {
                  double gacc = 0.0;
                  for (int y = 0; y < h; ++y) {
                    const double* irow = inp + (y + ky) * wp + kx;
                    const double* orow = dout + y * wd;
#pragma omp simd reduction(+ : gacc)
                    for (int x = 0; x < wd; ++x) gacc += orow[x] * irow[x];
                  }
                  gw[woff + static_cast<std::size_t>(ky) * s.ksize + kx] += gacc;
                }
              }
            }
          }
        }
        // strip the padding
        cot.assign(static_cast<std::size_t>(s.in_ch) * h * wd, 0.0);
        for (int ic = 0; ic < s.in_ch; ++ic)
          for (int y = 0; y < h; ++y)
            std::memcpy(&cot[(static_cast<std::size_t>(ic) * h + y) * wd],
                        &ws.flow2[(static_cast<std::size_t>(ic) * hp + y + p) * wp + p],
                        sizeof(double) * wd);
        break;
      }
      case LayerSpec::Kind::Dense: {
        const std::size_t bias_off = static_cast<std::size_t>(s.out_dim) * s.in_dim;
        ws.flow2.assign(static_cast<std::size_t>(s.in_dim), 0.0);
        for (int o = 0; o < s.out_dim; ++o) {
          const double co = cot[static_cast<std::size_t>(o)];
          const double* row = &w[static_cast<std::size_t>(o) * s.in_dim];
          if (gw) {
            double* grow = gw + static_cast<std::size_t>(o) * s.in_dim;
            for (int i = 0; i < s.in_dim; ++i) grow[i] += co * cache[static_cast<std::size_t>(i)];
            gw[bias_off + o] += co;
          }
          for (int i = 0; i < s.in_dim; ++i) ws.flow2[static_cast<std::size_t>(i)] += row[i] * co;
        }
        cot = ws.flow2;
        break;
      }
      case LayerSpec::Kind::Activation: {
        for (std::size_t i = 0; i < cot.size(); ++i) cot[i] *= act_grad(s.act, cache[i]);
        break;
      }
      case LayerSpec::Kind::TimeEmbedAdd: {
        if (gw) {
          const int nf = 2 * s.freqs;
          const int pix = in_shape.h * in_shape.w;
          const std::size_t bias_off = static_cast<std::size_t>(s.channels) * nf;
          for (int c = 0; c < s.channels; ++c) {
            const double* chan = &cot[static_cast<std::size_t>(c) * pix];
            double csum = 0.0;
            for (int i = 0; i < pix; ++i) csum += chan[i];
            gw[bias_off + c] += csum;
            double* grow = gw + static_cast<std::size_t>(c) * nf;
            for (int f = 0; f < nf; ++f) grow[f] += csum * cache[static_cast<std::size_t>(f)];
          }
        }
        break;  // input cotangent unchanged
      }
    }
  }
  return cot;
}

std::vector<double> Network::backward(std::span<const double> out_cotangent, Workspace& ws, GradBuffers& sink) const {
  return backward_impl(out_cotangent, ws, &sink);
}

std::vector<double> Network::backward(std::span<const double> out_cotangent, Workspace& ws) {
  return backward_impl(out_cotangent, ws, &grads_);
}

std::vector<double> Network::backward_input(std::span<const double> out_cotangent, Workspace& ws) const {
  return backward_impl(out_cotangent, ws, nullptr);
}

AdamState::AdamState(const Network& net) {
  m.reserve(net.weights().size());
  v.reserve(net.weights().size());
  for (const auto& w : net.weights()) {
    m.emplace_back(w.size(), 0.0);
    v.emplace_back(w.size(), 0.0);
  }
}

void adam_step(Network& net, AdamState& state, double lr) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto& weights = net.weights();
  auto& grads = net.grads();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto& w = weights[l];
    auto& g = grads.g[l];
    auto& m = state.m[l];
    auto& v = state.v[l];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + state.eps);
    }
  }
  net.zero_grads();
}

Network make_conv_score_net(GridShape grid, int channels) {
  TensorShape in{1, grid.ny, grid.nx};
  std::vector<LayerSpec> specs{
      LayerSpec::conv2d(1, channels),
      LayerSpec::time_embed(channels),
      LayerSpec::activation(Act::SiLU),
      LayerSpec::conv2d(channels, channels),
      LayerSpec::activation(Act::SiLU),
      LayerSpec::conv2d(channels, channels),
      LayerSpec::activation(Act::SiLU),
      LayerSpec::conv2d(channels, 1),
  };
  return Network(in, std::move(specs));
}

Network make_pixel_surrogate_net(GridShape grid, int channels) {
  TensorShape in{1, grid.ny, grid.nx};
  std::vector<LayerSpec> specs{
      LayerSpec::pixel_bias(),
      LayerSpec::conv2d(1, channels),
      LayerSpec::activation(Act::SiLU),
      LayerSpec::conv2d(channels, channels),
      LayerSpec::activation(Act::SiLU),
      LayerSpec::conv2d(channels, channels),
      LayerSpec::activation(Act::SiLU),
      LayerSpec::conv2d(channels, channels),
      LayerSpec::activation(Act::SiLU),
      LayerSpec::conv2d(channels, 1),
  };
  return Network(in, std::move(specs));
}

Network make_mlp_score_net(int dim, int hidden) {
  TensorShape in{dim, 1, 1};
  std::vector<LayerSpec> specs{
      LayerSpec::dense(dim, hidden),
      LayerSpec::time_embed(hidden),
      LayerSpec::activation(Act::SiLU),
      LayerSpec::dense(hidden, hidden),
      LayerSpec::activation(Act::SiLU),
      LayerSpec::dense(hidden, dim),
  };
  return Network(in, std::move(specs));
}

}  // namespace diffinv
