/* Copyright 2026 the certsmooth authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Compact feed-forward network (ReLU hidden layers, softmax head) serving as
// both the base classifier and the surrogate, with mini-batch Adam training,
// analytic backpropagation for cross-entropy and Jensen-Shannon losses, and
// a bit-exact binary weight format.

#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "certsmooth/errors.hpp"
#include "certsmooth/numerics.hpp"
#include "certsmooth/rng.hpp"

namespace certsmooth::model {

using numerics::SimplexVector;

enum class Head : std::uint32_t {
  kArgmaxClassifier = 0,
  kSimplexPredictor = 1,
};

enum class Loss {
  kCrossEntropy,
  kJs,
};

/// One dense layer: row-major weight matrix (out x in) plus bias.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;
  std::vector<double> b;
};

struct NetworkParams {
  std::vector<std::size_t> layer_dims;  // input d, hidden widths..., output k
  std::vector<Layer> layers;
  Head head = Head::kArgmaxClassifier;

  /// Optional instrumentation: when attached, every forward pass through
  /// this network increments the counter.
  std::shared_ptr<std::atomic<std::uint64_t>> forward_counter;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t num_classes() const { return layer_dims.back(); }
};

inline bool same_weights(const NetworkParams& a, const NetworkParams& b) {
  if (a.layer_dims != b.layer_dims || a.head != b.head) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].w != b.layers[l].w || a.layers[l].b != b.layers[l].b) {
      return false;
    }
  }
  return true;
}

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::size_t lr_step = 20;  // epochs between decays
  double lr_gamma = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) ||
        !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
      throw std::invalid_argument("TrainConfig: betas must be in (0, 1)");
    }
    if (lr_step < 1) throw std::invalid_argument("TrainConfig: lr_step must be >= 1");
    if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) throw std::invalid_argument("TrainConfig: lr_gamma must be in (0, 1]");
  }
};

/// Per-parameter Adam moment accumulators.
struct AdamState {
  std::vector<Layer> m;
  std::vector<Layer> v;
  std::uint64_t step = 0;
};

/// Gradient of a loss with respect to every parameter, same shapes as the
/// network's layers.
struct Gradients {
  std::vector<Layer> layers;
};

/// Training inputs paired with simplex targets (one-hot rows for plain
/// classification, normalized counts for the surrogate).
struct TrainingSet {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;
};

/// Per-epoch diagnostics collected during train().
struct TrainStats {
  std::vector<double> epoch_mean_loss;
  std::vector<double> epoch_learning_rate;
};

inline NetworkParams init_network(std::vector<std::size_t> layer_dims,
                                  Head head, std::uint64_t seed) {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("init_network: need input and output dims");
  }
  for (std::size_t d : layer_dims) {
    if (d == 0) throw std::invalid_argument("init_network: zero layer width");
  }
  NetworkParams net;
  net.layer_dims = std::move(layer_dims);
  net.head = head;
  rng::CounterRng gen(rng::derive(seed, rng::kInitStream));
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    Layer layer;
    layer.in = net.layer_dims[l];
    layer.out = net.layer_dims[l + 1];
    layer.w.resize(layer.in * layer.out);
    layer.b.assign(layer.out, 0.0);
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.in));
    for (double& w : layer.w) w = scale * gen.next_gaussian();
    net.layers.push_back(std::move(layer));
  }
  return net;
}

/// Scratch buffers reused across forward/backward calls on hot paths.
class Workspace {
 public:
  std::vector<std::vector<double>> acts;  // acts[0] = input copy, acts[L] = probs
  std::vector<double> delta;
  std::vector<double> delta_prev;

  void resize_for(const NetworkParams& net) {
    acts.resize(net.layers.size() + 1);
    acts[0].resize(net.input_dim());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      acts[l + 1].resize(net.layers[l].out);
    }
    delta.resize(0);
    delta_prev.resize(0);
  }
};

namespace detail {

inline void affine_relu_stack(const NetworkParams& net, const double* x,
                              Workspace& ws) {
  std::copy(x, x + net.input_dim(), ws.acts[0].begin());
  const std::size_t n_layers = net.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Layer& layer = net.layers[l];
    const std::vector<double>& a = ws.acts[l];
    std::vector<double>& z = ws.acts[l + 1];
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* row = layer.w.data() + o * layer.in;
      double acc = layer.b[o];
      for (std::size_t i = 0; i < layer.in; ++i) acc += row[i] * a[i];
      z[o] = acc;
    }
    if (l + 1 < n_layers) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
  }
  // softmax with max subtraction on the final pre-activations
  std::vector<double>& logits = ws.acts[n_layers];
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

}  // namespace detail

/// Softmax class probabilities for input x. Deterministic; always a valid
/// simplex vector.
inline const std::vector<double>& forward_probs(const NetworkParams& net,
                                                const double* x,
                                                Workspace& ws) {
  if (net.forward_counter) {
    net.forward_counter->fetch_add(1, std::memory_order_relaxed);
  }
  detail::affine_relu_stack(net, x, ws);
  return ws.acts.back();
}

inline SimplexVector forward(const NetworkParams& net,
                             std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw std::invalid_argument("forward: input has dim " +
                                std::to_string(x.size()) + ", network expects " +
                                std::to_string(net.input_dim()));
  }
  Workspace ws;
  ws.resize_for(net);
  return SimplexVector(forward_probs(net, x.data(), ws));
}

inline int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;  // strict: ties keep the lowest index
  }
  return best;
}

/// Predicted class: argmax of forward, ties broken toward the lowest index.
inline int classify(const NetworkParams& net, const double* x, Workspace& ws) {
  return argmax_lowest(forward_probs(net, x, ws));
}

inline int classify(const NetworkParams& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw std::invalid_argument("classify: input dim mismatch");
  }
  Workspace ws;
  ws.resize_for(net);
  return classify(net, x.data(), ws);
}

namespace detail {

// Probabilities are clamped to >= kLogFloor inside every log so softmax
// underflow cannot produce infinities.
inline constexpr double kLogFloor = 1e-12;

inline double safe_log(double v) { return std::log(std::max(v, kLogFloor)); }

inline double loss_value(const std::vector<double>& probs,
                         const std::vector<double>& target, Loss loss) {
  double acc = 0.0;
  if (loss == Loss::kCrossEntropy) {
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (target[i] > 0.0) acc -= target[i] * safe_log(probs[i]);
    }
    return acc;
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double m = 0.5 * (probs[i] + target[i]);
    acc += 0.5 * probs[i] * (safe_log(probs[i]) - safe_log(m));
    if (target[i] > 0.0) {
      acc += 0.5 * target[i] * (std::log(target[i]) - safe_log(m));
    }
  }
  return std::max(acc, 0.0);
}

// dL/dlogits at the softmax output.
//   cross-entropy: p - t
//   JS: dL/dp_i = (1/2) log(p_i / m_i), pushed through the softmax Jacobian.
inline void loss_logit_gradient(const std::vector<double>& probs,
                                const std::vector<double>& target, Loss loss,
                                std::vector<double>& out) {
  const std::size_t k = probs.size();
  out.resize(k);
  if (loss == Loss::kCrossEntropy) {
    for (std::size_t i = 0; i < k; ++i) out[i] = probs[i] - target[i];
    return;
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double m = 0.5 * (probs[i] + target[i]);
    out[i] = 0.5 * (safe_log(probs[i]) - safe_log(m));
    dot += out[i] * probs[i];
  }
  for (std::size_t i = 0; i < k; ++i) out[i] = probs[i] * (out[i] - dot);
}

}  // namespace detail

inline Gradients zero_gradients(const NetworkParams& net) {
  Gradients g;
  for (const Layer& layer : net.layers) {
    Layer zl;
    zl.in = layer.in;
    zl.out = layer.out;
    zl.w.assign(layer.w.size(), 0.0);
    zl.b.assign(layer.b.size(), 0.0);
    g.layers.push_back(std::move(zl));
  }
  return g;
}

namespace detail {

// Backpropagates one example through the trace left in ws by forward_probs
// and accumulates parameter gradients. Returns the example's loss.
inline double accumulate_gradient(const NetworkParams& net,
                                  const std::vector<double>& target, Loss loss,
                                  Workspace& ws, Gradients& grads) {
  const std::vector<double>& probs = ws.acts.back();
  const double value = loss_value(probs, target, loss);
  loss_logit_gradient(probs, target, loss, ws.delta);
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& layer = net.layers[li];
    Layer& g = grads.layers[li];
    const std::vector<double>& a_prev = ws.acts[li];
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = ws.delta[o];
      g.b[o] += d;
      double* grow = g.w.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) grow[i] += d * a_prev[i];
    }
    if (li == 0) break;
    ws.delta_prev.assign(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = ws.delta[o];
      const double* row = layer.w.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) ws.delta_prev[i] += d * row[i];
    }
    // ReLU mask from the stored post-activation values
    for (std::size_t i = 0; i < layer.in; ++i) {
      if (ws.acts[li][i] <= 0.0) ws.delta_prev[i] = 0.0;
    }
    std::swap(ws.delta, ws.delta_prev);
  }
  return value;
}

}  // namespace detail

/// Gradient of the chosen loss at a single example, via backpropagation.
inline Gradients analytic_gradient(const NetworkParams& net,
                                   std::span<const double> x,
                                   const std::vector<double>& target,
                                   Loss loss) {
  if (x.size() != net.input_dim() || target.size() != net.num_classes()) {
    throw std::invalid_argument("analytic_gradient: dimension mismatch");
  }
  Workspace ws;
  ws.resize_for(net);
  forward_probs(net, x.data(), ws);
  Gradients grads = zero_gradients(net);
  detail::accumulate_gradient(net, target, loss, ws, grads);
  return grads;
}

/// Loss of the network on one example.
inline double example_loss(const NetworkParams& net, std::span<const double> x,
                           const std::vector<double>& target, Loss loss) {
  Workspace ws;
  ws.resize_for(net);
  const std::vector<double>& probs = forward_probs(net, x.data(), ws);
  return detail::loss_value(probs, target, loss);
}

/// Mini-batch Adam with a step-decay schedule. Deterministic for a fixed
/// seed: shuffles, augmentation noise, and update order are all derived from
/// cfg.seed, so two runs produce bit-identical parameter trajectories.
/// augment_sigma > 0 adds fresh N(0, sigma^2 I) noise to every input each
/// epoch (Gaussian training augmentation for the base classifier).
inline NetworkParams train(NetworkParams net, const TrainingSet& data,
                           Loss loss, const TrainConfig& cfg,
                           double augment_sigma = 0.0,
                           TrainStats* stats = nullptr) {
  cfg.validate();
  const std::size_t n = data.inputs.size();
  if (n == 0 || data.targets.size() != n) {
    throw std::invalid_argument("train: empty or inconsistent training set");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (data.inputs[i].size() != net.input_dim() ||
        data.targets[i].size() != net.num_classes()) {
      throw std::invalid_argument("train: example " + std::to_string(i) +
                                  " has inconsistent dimensions");
    }
  }

  AdamState adam;
  adam.m = zero_gradients(net).layers;
  adam.v = zero_gradients(net).layers;

  Workspace ws;
  ws.resize_for(net);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> noisy(net.input_dim());
  constexpr double kAdamEps = 1e-8;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cfg.learning_rate *
        std::pow(cfg.lr_gamma, static_cast<double>(epoch / cfg.lr_step));
    rng::CounterRng shuffle_rng(
        rng::derive(cfg.seed, rng::kShuffleStream, epoch));
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = shuffle_rng.next_u64() % i;
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      Gradients grads = zero_gradients(net);
      double batch_loss = 0.0;
      for (std::size_t pos = start; pos < stop; ++pos) {
        const std::size_t idx = order[pos];
        const double* x = data.inputs[idx].data();
        if (augment_sigma > 0.0) {
          rng::CounterRng noise_rng(
              rng::derive(cfg.seed, rng::kAugmentStream, epoch, idx));
          for (std::size_t d = 0; d < noisy.size(); ++d) {
            noisy[d] = data.inputs[idx][d] +
                       augment_sigma * noise_rng.next_gaussian();
          }
          x = noisy.data();
        }
        forward_probs(net, x, ws);
        batch_loss +=
            detail::accumulate_gradient(net, data.targets[idx], loss, ws, grads);
      }
      const double count = static_cast<double>(stop - start);
      if (!std::isfinite(batch_loss)) {
        throw training_diverged_error("train: non-finite loss", epoch,
                                      batch_index);
      }
      epoch_loss += batch_loss;

      adam.step += 1;
      const double bc1 =
          1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.step));
      const double bc2 =
          1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.step));
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto update = [&](std::vector<double>& theta,
                          const std::vector<double>& g_sum,
                          std::vector<double>& m, std::vector<double>& v) {
          for (std::size_t i = 0; i < theta.size(); ++i) {
            const double g = g_sum[i] / count;
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
          }
        };
        update(net.layers[l].w, grads.layers[l].w, adam.m[l].w, adam.v[l].w);
        update(net.layers[l].b, grads.layers[l].b, adam.m[l].b, adam.v[l].b);
      }
      ++batch_index;
    }
    if (stats) {
      stats->epoch_mean_loss.push_back(epoch_loss / static_cast<double>(n));
      stats->epoch_learning_rate.push_back(lr);
    }
  }
  return net;
}

// ---------------------------------------------------------------------------
// Weight persistence. Layout (little-endian):
//   magic "CSNW" | u32 version | u32 head | u32 dim count | u64 dims...
//   then per layer: w (out*in doubles, row-major), b (out doubles)
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kWeightsMagic[4] = {'C', 'S', 'N', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class ByteReader {
 public:
  ByteReader(const std::string& data, std::size_t start,
             const std::string& path)
      : data_(data), path_(path), pos_(start) {}
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  double f64(const char* field) { return std::bit_cast<double>(u64(field)); }
  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t bytes, const char* field) {
    if (pos_ + bytes > data_.size()) {
      throw format_error(path_ + ": truncated while reading " +
                         std::string(field));
    }
  }
  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_weights(const NetworkParams& net, const std::string& path) {
  std::string blob;
  blob.append(detail::kWeightsMagic, 4);
  detail::put_u32(blob, detail::kWeightsVersion);
  detail::put_u32(blob, static_cast<std::uint32_t>(net.head));
  detail::put_u32(blob, static_cast<std::uint32_t>(net.layer_dims.size()));
  for (std::size_t d : net.layer_dims) detail::put_u64(blob, d);
  for (const Layer& layer : net.layers) {
    for (double v : layer.w) detail::put_f64(blob, v);
    for (double v : layer.b) detail::put_f64(blob, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_weights: cannot open " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("save_weights: write failed for " + path);
}

inline NetworkParams load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw missing_artifact_error("load_weights: cannot open " + path);
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (blob.size() < 4 || std::memcmp(blob.data(), detail::kWeightsMagic, 4) != 0) {
    throw format_error(path + ": bad magic, not a weights file");
  }
  detail::ByteReader reader(blob, 4, path);
  const std::uint32_t version = reader.u32("version");
  if (version != detail::kWeightsVersion) {
    throw format_error(path + ": unsupported weights version " +
                       std::to_string(version));
  }
  const std::uint32_t head = reader.u32("head");
  if (head > 1) {
    throw format_error(path + ": invalid head tag " + std::to_string(head));
  }
  const std::uint32_t n_dims = reader.u32("dim count");
  if (n_dims < 2) {
    throw format_error(path + ": dim count must be >= 2, got " +
                       std::to_string(n_dims));
  }
  NetworkParams net;
  net.head = static_cast<Head>(head);
  for (std::uint32_t i = 0; i < n_dims; ++i) {
    const std::uint64_t d = reader.u64("layer dims");
    if (d == 0) throw format_error(path + ": zero width in layer dims");
    net.layer_dims.push_back(static_cast<std::size_t>(d));
  }
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    Layer layer;
    layer.in = net.layer_dims[l];
    layer.out = net.layer_dims[l + 1];
    layer.w.resize(layer.in * layer.out);
    layer.b.resize(layer.out);
    for (double& v : layer.w) v = reader.f64("weights");
    for (double& v : layer.b) v = reader.f64("bias");
    for (double v : layer.w) {
      if (!std::isfinite(v)) {
        throw format_error(path + ": non-finite weight in layer " +
                           std::to_string(l));
      }
    }
    for (double v : layer.b) {
      if (!std::isfinite(v)) {
        throw format_error(path + ": non-finite bias in layer " +
                           std::to_string(l));
      }
    }
    net.layers.push_back(std::move(layer));
  }
  if (!reader.exhausted()) {
    throw format_error(path + ": trailing bytes after weights payload");
  }
  return net;
}

}  // namespace certsmooth::model
