#include "dimap/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "dimap/rng.hpp"

namespace dimap {

void NetworkSpec::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("network spec: " + why); };
  if (input_channels < 0 || aux_width < 0) fail("negative input widths");
  if (input_channels > 0 && (input_height < 1 || input_width < 1))
    fail("grid input needs positive height and width");
  if (input_channels == 0 && !conv.empty()) fail("conv stack without grid input");
  if (output_width < 1) fail("output width must be positive");
  int h = input_height, w = input_width;
  for (size_t i = 0; i < conv.size(); ++i) {
    const ConvLayerSpec& c = conv[i];
    if (c.out_channels < 1 || c.kernel < 1 || c.stride < 1 || c.pool_size < 1)
      fail("conv layer " + std::to_string(i) + " has a non-positive dimension");
    if (h < c.kernel || w < c.kernel)
      fail("conv layer " + std::to_string(i) + " kernel exceeds its input map");
    h = (h - c.kernel) / c.stride + 1;
    w = (w - c.kernel) / c.stride + 1;
    if (c.pool != PoolMode::none && h >= c.pool_size && w >= c.pool_size) {
      h /= c.pool_size;
      w /= c.pool_size;
    }
  }
  for (int width : fc)
    if (width < 1) fail("fully connected width must be positive");
  int flat = conv.empty() ? input_channels * input_height * input_width
                          : conv.back().out_channels * h * w;
  if (flat + aux_width < 1) fail("network has no inputs at all");
}

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  os << "in:" << input_channels << 'x' << input_height << 'x' << input_width
     << "+aux" << aux_width;
  for (const ConvLayerSpec& c : conv) {
    os << "|conv" << c.out_channels << 'k' << c.kernel << 's' << c.stride;
    if (c.pool == PoolMode::max) os << "pmax" << c.pool_size;
    if (c.pool == PoolMode::sum) os << "psum" << c.pool_size;
  }
  for (int width : fc) os << "|fc" << width;
  os << "|out" << output_width << (dueling ? "duel" : "");
  return os.str();
}

uint64_t NetworkSpec::shape_hash() const {
  const std::string d = describe();
  uint64_t h = 14695981039346656037ull;  // FNV-1a
  for (unsigned char ch : d) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

size_t Parameters::total_size() const {
  size_t n = 0;
  for (const Tensor& t : tensors) n += t.size();
  return n;
}

void Parameters::set_zero() {
  for (Tensor& t : tensors) std::fill(t.values.begin(), t.values.end(), 0.0);
}

double* Parameters::flat(size_t component, size_t* tensor_out) {
  for (size_t i = 0; i < tensors.size(); ++i) {
    if (component < tensors[i].size()) {
      if (tensor_out) *tensor_out = i;
      return &tensors[i].values[component];
    }
    component -= tensors[i].size();
  }
  return nullptr;
}

AdamState make_adam_state(const Parameters& like, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  s.first_moment = like;
  s.second_moment = like;
  s.first_moment.set_zero();
  s.second_moment.set_zero();
  s.step = 0;
  return s;
}

void adam_step(Parameters& params, const Parameters& grads, AdamState& state) {
  if (params.tensors.size() != grads.tensors.size())
    throw std::invalid_argument("adam_step: parameter/gradient shape mismatch");
  state.step += 1;
  const AdamConfig& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (size_t t = 0; t < params.tensors.size(); ++t) {
    auto& p = params.tensors[t].values;
    const auto& g = grads.tensors[t].values;
    auto& m = state.first_moment.tensors[t].values;
    auto& v = state.second_moment.tensors[t].values;
    if (p.size() != g.size()) throw std::invalid_argument("adam_step: tensor size mismatch");
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  int c = spec_.input_channels, h = spec_.input_height, w = spec_.input_width;
  for (const ConvLayerSpec& layer : spec_.conv) {
    StageDims d{};
    d.in_c = c;
    d.in_h = h;
    d.in_w = w;
    d.conv_h = (h - layer.kernel) / layer.stride + 1;
    d.conv_w = (w - layer.kernel) / layer.stride + 1;
    d.pooled = layer.pool != PoolMode::none && d.conv_h >= layer.pool_size &&
               d.conv_w >= layer.pool_size;
    d.out_h = d.pooled ? d.conv_h / layer.pool_size : d.conv_h;
    d.out_w = d.pooled ? d.conv_w / layer.pool_size : d.conv_w;
    stages_.push_back(d);
    c = layer.out_channels;
    h = d.out_h;
    w = d.out_w;
  }
  flat_size_ = spec_.input_channels == 0 ? 0 : c * h * w;
  trunk_width_ = spec_.fc.empty() ? flat_size_ + spec_.aux_width : spec_.fc.back();
}

Parameters Network::zero_params() const {
  Parameters p;
  auto add = [&](std::vector<int> shape) {
    Tensor t;
    t.shape = std::move(shape);
    size_t n = 1;
    for (int d : t.shape) n *= static_cast<size_t>(d);
    t.values.assign(n, 0.0);
    p.tensors.push_back(std::move(t));
  };
  int in_c = spec_.input_channels;
  for (const ConvLayerSpec& layer : spec_.conv) {
    add({layer.out_channels, in_c, layer.kernel, layer.kernel});
    add({layer.out_channels});
    in_c = layer.out_channels;
  }
  int in_w = flat_size_ + spec_.aux_width;
  for (int width : spec_.fc) {
    add({width, in_w});
    add({width});
    in_w = width;
  }
  if (spec_.dueling) {
    add({1, trunk_width_});
    add({1});
    add({spec_.output_width, trunk_width_});
    add({spec_.output_width});
  } else {
    add({spec_.output_width, trunk_width_});
    add({spec_.output_width});
  }
  return p;
}

Parameters Network::init_params(uint64_t seed) const {
  Parameters p = zero_params();
  Rng rng(seed);
  for (Tensor& t : p.tensors) {
    if (t.shape.size() < 2) continue;  // biases start at zero
    size_t fan_in = 1;
    for (size_t i = 1; i < t.shape.size(); ++i) fan_in *= static_cast<size_t>(t.shape[i]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values) v = rng.uniform(-bound, bound);
  }
  return p;
}

namespace {

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace

std::vector<double> Network::forward(const Parameters& params, const Batch& batch) const {
  ForwardCache scratch;
  return forward(params, batch, scratch);
}

std::vector<double> Network::forward(const Parameters& params, const Batch& batch,
                                     ForwardCache& cache) const {
  const int n = batch.count;
  const int expected_grid = spec_.input_channels * spec_.input_height * spec_.input_width;
  if (batch.grid_size != expected_grid || batch.aux_size != spec_.aux_width)
    throw std::invalid_argument("batch shape does not match the network spec");
  if (batch.grid.size() != static_cast<size_t>(n) * batch.grid_size ||
      batch.aux.size() != static_cast<size_t>(n) * batch.aux_size)
    throw std::invalid_argument("batch buffers disagree with batch.count");

  cache.count = n;
  cache.conv_in.assign(stages_.size(), {});
  cache.conv_pre.assign(stages_.size(), {});
  cache.pool_arg.assign(stages_.size(), {});

  std::vector<double> current = batch.grid;  // sample-major [n][c][h][w]
  size_t param_idx = 0;

  for (size_t li = 0; li < stages_.size(); ++li) {
    const ConvLayerSpec& layer = spec_.conv[li];
    const StageDims& d = stages_[li];
    const Tensor& W = params.tensors[param_idx++];
    const Tensor& B = params.tensors[param_idx++];
    cache.conv_in[li] = current;

    const int oc_n = layer.out_channels;
    const size_t pre_per = static_cast<size_t>(oc_n) * d.conv_h * d.conv_w;
    std::vector<double>& pre = cache.conv_pre[li];
    pre.assign(static_cast<size_t>(n) * pre_per, 0.0);

    const size_t in_per = static_cast<size_t>(d.in_c) * d.in_h * d.in_w;
    for (int s = 0; s < n; ++s) {
      const double* in = current.data() + s * in_per;
      double* out = pre.data() + s * pre_per;
      for (int oc = 0; oc < oc_n; ++oc) {
        const double* woc = W.values.data() +
                            static_cast<size_t>(oc) * d.in_c * layer.kernel * layer.kernel;
        for (int oy = 0; oy < d.conv_h; ++oy) {
          for (int ox = 0; ox < d.conv_w; ++ox) {
            double acc = B.values[oc];
            for (int ic = 0; ic < d.in_c; ++ic) {
              const double* wic = woc + static_cast<size_t>(ic) * layer.kernel * layer.kernel;
              const double* inc = in + static_cast<size_t>(ic) * d.in_h * d.in_w;
              for (int ky = 0; ky < layer.kernel; ++ky) {
                const double* row = inc + static_cast<size_t>(oy * layer.stride + ky) * d.in_w +
                                    ox * layer.stride;
                const double* wrow = wic + static_cast<size_t>(ky) * layer.kernel;
                for (int kx = 0; kx < layer.kernel; ++kx) acc += wrow[kx] * row[kx];
              }
            }
            out[static_cast<size_t>(oc) * d.conv_h * d.conv_w + static_cast<size_t>(oy) * d.conv_w +
                ox] = acc;
          }
        }
      }
    }

    // Rectifier + pooling into the next stage's input.
    const size_t out_per = static_cast<size_t>(oc_n) * d.out_h * d.out_w;
    std::vector<double> pooled(static_cast<size_t>(n) * out_per);
    if (d.pooled && layer.pool == PoolMode::max)
      cache.pool_arg[li].assign(static_cast<size_t>(n) * out_per, 0);
    for (int s = 0; s < n; ++s) {
      const double* prev = pre.data() + s * pre_per;
      double* out = pooled.data() + s * out_per;
      for (int oc = 0; oc < oc_n; ++oc) {
        const double* m = prev + static_cast<size_t>(oc) * d.conv_h * d.conv_w;
        double* o = out + static_cast<size_t>(oc) * d.out_h * d.out_w;
        if (!d.pooled) {
          for (int i = 0; i < d.conv_h * d.conv_w; ++i) o[i] = relu(m[i]);
        } else {
          const int p = layer.pool_size;
          for (int py = 0; py < d.out_h; ++py) {
            for (int px = 0; px < d.out_w; ++px) {
              if (layer.pool == PoolMode::sum) {
                double acc = 0.0;
                for (int wy = 0; wy < p; ++wy)
                  for (int wx = 0; wx < p; ++wx)
                    acc += relu(m[(py * p + wy) * d.conv_w + px * p + wx]);
                o[static_cast<size_t>(py) * d.out_w + px] = acc;
              } else {
                double best = -1.0;
                int best_idx = (py * p) * d.conv_w + px * p;
                for (int wy = 0; wy < p; ++wy) {
                  for (int wx = 0; wx < p; ++wx) {
                    const int idx = (py * p + wy) * d.conv_w + px * p + wx;
                    const double v = relu(m[idx]);
                    if (v > best) {
                      best = v;
                      best_idx = idx;
                    }
                  }
                }
                o[static_cast<size_t>(py) * d.out_w + px] = best;
                cache.pool_arg[li][s * out_per + static_cast<size_t>(oc) * d.out_h * d.out_w +
                                   static_cast<size_t>(py) * d.out_w + px] = best_idx;
              }
            }
          }
        }
      }
    }
    current = std::move(pooled);
  }

  // Flatten + aux concat.
  const int fc_in_width = flat_size_ + spec_.aux_width;
  cache.fc_in.assign(static_cast<size_t>(n) * fc_in_width, 0.0);
  for (int s = 0; s < n; ++s) {
    double* dst = cache.fc_in.data() + static_cast<size_t>(s) * fc_in_width;
    if (flat_size_ > 0)
      std::memcpy(dst, current.data() + static_cast<size_t>(s) * flat_size_,
                  sizeof(double) * flat_size_);
    for (int i = 0; i < spec_.aux_width; ++i)
      dst[flat_size_ + i] = batch.aux[static_cast<size_t>(s) * spec_.aux_width + i];
  }

  cache.fc_pre.assign(spec_.fc.size(), {});
  std::vector<double> act = cache.fc_in;
  int width_in = fc_in_width;
  for (size_t fi = 0; fi < spec_.fc.size(); ++fi) {
    const Tensor& W = params.tensors[param_idx++];
    const Tensor& B = params.tensors[param_idx++];
    const int width_out = spec_.fc[fi];
    std::vector<double>& pre = cache.fc_pre[fi];
    pre.assign(static_cast<size_t>(n) * width_out, 0.0);
    for (int s = 0; s < n; ++s) {
      const double* in = act.data() + static_cast<size_t>(s) * width_in;
      double* out = pre.data() + static_cast<size_t>(s) * width_out;
      for (int o = 0; o < width_out; ++o) {
        const double* wrow = W.values.data() + static_cast<size_t>(o) * width_in;
        double acc = B.values[o];
        for (int i = 0; i < width_in; ++i) acc += wrow[i] * in[i];
        out[o] = acc;
      }
    }
    act.assign(pre.size(), 0.0);
    for (size_t i = 0; i < pre.size(); ++i) act[i] = relu(pre[i]);
    width_in = width_out;
  }
  cache.head_in = act;

  // Output head.
  cache.out.assign(static_cast<size_t>(n) * spec_.output_width, 0.0);
  if (!spec_.dueling) {
    const Tensor& W = params.tensors[param_idx++];
    const Tensor& B = params.tensors[param_idx++];
    for (int s = 0; s < n; ++s) {
      const double* in = cache.head_in.data() + static_cast<size_t>(s) * trunk_width_;
      double* out = cache.out.data() + static_cast<size_t>(s) * spec_.output_width;
      for (int o = 0; o < spec_.output_width; ++o) {
        const double* wrow = W.values.data() + static_cast<size_t>(o) * trunk_width_;
        double acc = B.values[o];
        for (int i = 0; i < trunk_width_; ++i) acc += wrow[i] * in[i];
        out[o] = acc;
      }
    }
  } else {
    const Tensor& Wv = params.tensors[param_idx++];
    const Tensor& Bv = params.tensors[param_idx++];
    const Tensor& Wa = params.tensors[param_idx++];
    const Tensor& Ba = params.tensors[param_idx++];
    for (int s = 0; s < n; ++s) {
      const double* in = cache.head_in.data() + static_cast<size_t>(s) * trunk_width_;
      double* out = cache.out.data() + static_cast<size_t>(s) * spec_.output_width;
      double value = Bv.values[0];
      for (int i = 0; i < trunk_width_; ++i) value += Wv.values[i] * in[i];
      double mean_adv = 0.0;
      for (int o = 0; o < spec_.output_width; ++o) {
        const double* wrow = Wa.values.data() + static_cast<size_t>(o) * trunk_width_;
        double acc = Ba.values[o];
        for (int i = 0; i < trunk_width_; ++i) acc += wrow[i] * in[i];
        out[o] = acc;  // temporarily the raw advantage
        mean_adv += acc;
      }
      mean_adv /= spec_.output_width;
      for (int o = 0; o < spec_.output_width; ++o) out[o] = value + out[o] - mean_adv;
    }
  }
  return cache.out;
}

void Network::backward(const Parameters& params, const Batch& batch, const ForwardCache& cache,
                       const std::vector<double>& output_grads, Parameters& grads) const {
  const int n = cache.count;
  if (output_grads.size() != static_cast<size_t>(n) * spec_.output_width)
    throw std::invalid_argument("backward: output gradient size mismatch");
  if (grads.tensors.size() != params.tensors.size()) grads = zero_params();
  grads.set_zero();

  size_t head_first = params.tensors.size() - (spec_.dueling ? 4 : 2);
  std::vector<double> d_head(static_cast<size_t>(n) * trunk_width_, 0.0);

  if (!spec_.dueling) {
    const Tensor& W = params.tensors[head_first];
    Tensor& dW = grads.tensors[head_first];
    Tensor& dB = grads.tensors[head_first + 1];
    for (int s = 0; s < n; ++s) {
      const double* in = cache.head_in.data() + static_cast<size_t>(s) * trunk_width_;
      const double* g = output_grads.data() + static_cast<size_t>(s) * spec_.output_width;
      double* dh = d_head.data() + static_cast<size_t>(s) * trunk_width_;
      for (int o = 0; o < spec_.output_width; ++o) {
        dB.values[o] += g[o];
        const double* wrow = W.values.data() + static_cast<size_t>(o) * trunk_width_;
        double* dwrow = dW.values.data() + static_cast<size_t>(o) * trunk_width_;
        for (int i = 0; i < trunk_width_; ++i) {
          dwrow[i] += g[o] * in[i];
          dh[i] += wrow[i] * g[o];
        }
      }
    }
  } else {
    const Tensor& Wv = params.tensors[head_first];
    const Tensor& Wa = params.tensors[head_first + 2];
    Tensor& dWv = grads.tensors[head_first];
    Tensor& dBv = grads.tensors[head_first + 1];
    Tensor& dWa = grads.tensors[head_first + 2];
    Tensor& dBa = grads.tensors[head_first + 3];
    for (int s = 0; s < n; ++s) {
      const double* in = cache.head_in.data() + static_cast<size_t>(s) * trunk_width_;
      const double* g = output_grads.data() + static_cast<size_t>(s) * spec_.output_width;
      double* dh = d_head.data() + static_cast<size_t>(s) * trunk_width_;
      double gsum = 0.0;
      for (int o = 0; o < spec_.output_width; ++o) gsum += g[o];
      const double gmean = gsum / spec_.output_width;
      dBv.values[0] += gsum;
      for (int i = 0; i < trunk_width_; ++i) {
        dWv.values[i] += gsum * in[i];
        dh[i] += Wv.values[i] * gsum;
      }
      for (int o = 0; o < spec_.output_width; ++o) {
        const double da = g[o] - gmean;
        dBa.values[o] += da;
        const double* wrow = Wa.values.data() + static_cast<size_t>(o) * trunk_width_;
        double* dwrow = dWa.values.data() + static_cast<size_t>(o) * trunk_width_;
        for (int i = 0; i < trunk_width_; ++i) {
          dwrow[i] += da * in[i];
          dh[i] += wrow[i] * da;
        }
      }
    }
  }

  // Fully connected stack, reversed.
  std::vector<double> d_act = std::move(d_head);
  const int fc_in_width = flat_size_ + spec_.aux_width;
  for (int fi = static_cast<int>(spec_.fc.size()) - 1; fi >= 0; --fi) {
    const size_t wi = 2 * stages_.size() + 2 * fi;
    const Tensor& W = params.tensors[wi];
    Tensor& dW = grads.tensors[wi];
    Tensor& dB = grads.tensors[wi + 1];
    const int width_out = spec_.fc[fi];
    const int width_in = fi == 0 ? fc_in_width : spec_.fc[fi - 1];
    const std::vector<double>& pre = cache.fc_pre[fi];

    std::vector<double> d_prev(static_cast<size_t>(n) * width_in, 0.0);
    for (int s = 0; s < n; ++s) {
      const double* in = fi == 0 ? cache.fc_in.data() + static_cast<size_t>(s) * width_in : nullptr;
      // Post-relu input recomputed from the previous layer's pre-activations.
      const double* prev_pre =
          fi == 0 ? nullptr : cache.fc_pre[fi - 1].data() + static_cast<size_t>(s) * width_in;
      double* dp = d_prev.data() + static_cast<size_t>(s) * width_in;
      const double* dout = d_act.data() + static_cast<size_t>(s) * width_out;
      const double* p = pre.data() + static_cast<size_t>(s) * width_out;
      for (int o = 0; o < width_out; ++o) {
        const double dpre = p[o] > 0.0 ? dout[o] : 0.0;
        if (dpre == 0.0) continue;
        dB.values[o] += dpre;
        const double* wrow = W.values.data() + static_cast<size_t>(o) * width_in;
        double* dwrow = dW.values.data() + static_cast<size_t>(o) * width_in;
        for (int i = 0; i < width_in; ++i) {
          const double a = fi == 0 ? in[i] : relu(prev_pre[i]);
          dwrow[i] += dpre * a;
          dp[i] += wrow[i] * dpre;
        }
      }
    }
    d_act = std::move(d_prev);
  }

  if (stages_.empty()) return;

  // Peel off the aux part; what remains is the conv stack's output gradient.
  const size_t last = stages_.size() - 1;
  std::vector<double> d_out(static_cast<size_t>(n) * flat_size_, 0.0);
  for (int s = 0; s < n; ++s)
    std::memcpy(d_out.data() + static_cast<size_t>(s) * flat_size_,
                d_act.data() + static_cast<size_t>(s) * fc_in_width, sizeof(double) * flat_size_);

  for (int li = static_cast<int>(last); li >= 0; --li) {
    const ConvLayerSpec& layer = spec_.conv[li];
    const StageDims& d = stages_[li];
    const size_t wi = 2 * static_cast<size_t>(li);
    const Tensor& W = params.tensors[wi];
    Tensor& dW = grads.tensors[wi];
    Tensor& dB = grads.tensors[wi + 1];
    const std::vector<double>& pre = cache.conv_pre[li];
    const std::vector<double>& in_act = cache.conv_in[li];

    const size_t pre_per = static_cast<size_t>(layer.out_channels) * d.conv_h * d.conv_w;
    const size_t out_per = static_cast<size_t>(layer.out_channels) * d.out_h * d.out_w;
    const size_t in_per = static_cast<size_t>(d.in_c) * d.in_h * d.in_w;

    // Un-pool and apply the rectifier mask: gradient w.r.t. conv pre-activations.
    std::vector<double> d_pre(static_cast<size_t>(n) * pre_per, 0.0);
    for (int s = 0; s < n; ++s) {
      const double* dout = d_out.data() + s * out_per;
      const double* p = pre.data() + s * pre_per;
      double* dp = d_pre.data() + s * pre_per;
      for (int oc = 0; oc < layer.out_channels; ++oc) {
        const size_t map_off = static_cast<size_t>(oc) * d.conv_h * d.conv_w;
        const size_t out_off = static_cast<size_t>(oc) * d.out_h * d.out_w;
        if (!d.pooled) {
          for (int i = 0; i < d.conv_h * d.conv_w; ++i)
            if (p[map_off + i] > 0.0) dp[map_off + i] += dout[out_off + i];
        } else if (layer.pool == PoolMode::max) {
          for (int i = 0; i < d.out_h * d.out_w; ++i) {
            const int src = cache.pool_arg[li][s * out_per + out_off + i];
            if (p[map_off + src] > 0.0) dp[map_off + src] += dout[out_off + i];
          }
        } else {  // sum pooling broadcasts
          const int ps = layer.pool_size;
          for (int py = 0; py < d.out_h; ++py)
            for (int px = 0; px < d.out_w; ++px) {
              const double dg = dout[out_off + static_cast<size_t>(py) * d.out_w + px];
              for (int wy = 0; wy < ps; ++wy)
                for (int wx = 0; wx < ps; ++wx) {
                  const int idx = (py * ps + wy) * d.conv_w + px * ps + wx;
                  if (p[map_off + idx] > 0.0) dp[map_off + idx] += dg;
                }
            }
        }
      }
    }

    std::vector<double> d_in(static_cast<size_t>(n) * in_per, 0.0);
    for (int s = 0; s < n; ++s) {
      const double* in = in_act.data() + s * in_per;
      const double* dp = d_pre.data() + s * pre_per;
      double* di = d_in.data() + s * in_per;
      for (int oc = 0; oc < layer.out_channels; ++oc) {
        const double* dmap = dp + static_cast<size_t>(oc) * d.conv_h * d.conv_w;
        double* dwoc =
            dW.values.data() + static_cast<size_t>(oc) * d.in_c * layer.kernel * layer.kernel;
        const double* woc =
            W.values.data() + static_cast<size_t>(oc) * d.in_c * layer.kernel * layer.kernel;
        for (int oy = 0; oy < d.conv_h; ++oy) {
          for (int ox = 0; ox < d.conv_w; ++ox) {
            const double g = dmap[static_cast<size_t>(oy) * d.conv_w + ox];
            if (g == 0.0) continue;
            dB.values[oc] += g;
            for (int ic = 0; ic < d.in_c; ++ic) {
              const double* inc = in + static_cast<size_t>(ic) * d.in_h * d.in_w;
              double* dinc = di + static_cast<size_t>(ic) * d.in_h * d.in_w;
              double* dwic = dwoc + static_cast<size_t>(ic) * layer.kernel * layer.kernel;
              const double* wic = woc + static_cast<size_t>(ic) * layer.kernel * layer.kernel;
              for (int ky = 0; ky < layer.kernel; ++ky) {
                const size_t row = static_cast<size_t>(oy * layer.stride + ky) * d.in_w +
                                   ox * layer.stride;
                for (int kx = 0; kx < layer.kernel; ++kx) {
                  dwic[static_cast<size_t>(ky) * layer.kernel + kx] += g * inc[row + kx];
                  dinc[row + kx] += wic[static_cast<size_t>(ky) * layer.kernel + kx] * g;
                }
              }
            }
          }
        }
      }
    }
    d_out = std::move(d_in);
  }
}

double Network::kink_margin(const Parameters& params, const Batch& batch) const {
  ForwardCache cache;
  forward(params, batch, cache);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& pre : cache.conv_pre)
    for (double v : pre) margin = std::min(margin, std::abs(v));
  for (const auto& pre : cache.fc_pre)
    for (double v : pre) margin = std::min(margin, std::abs(v));
  // Max-pool windows: distance between winner and runner-up, counted only
  // when the winner is active (an all-negative window is flat regardless).
  for (size_t li = 0; li < stages_.size(); ++li) {
    if (spec_.conv[li].pool != PoolMode::max || !stages_[li].pooled) continue;
    const StageDims& d = stages_[li];
    const int p = spec_.conv[li].pool_size;
    const size_t pre_per = static_cast<size_t>(spec_.conv[li].out_channels) * d.conv_h * d.conv_w;
    for (int s = 0; s < cache.count; ++s) {
      const double* m = cache.conv_pre[li].data() + s * pre_per;
      for (int oc = 0; oc < spec_.conv[li].out_channels; ++oc) {
        const double* map = m + static_cast<size_t>(oc) * d.conv_h * d.conv_w;
        for (int py = 0; py < d.out_h; ++py) {
          for (int px = 0; px < d.out_w; ++px) {
            double best = -std::numeric_limits<double>::infinity(), second = best;
            for (int wy = 0; wy < p; ++wy)
              for (int wx = 0; wx < p; ++wx) {
                const double v = relu(map[(py * p + wy) * d.conv_w + px * p + wx]);
                if (v > best) {
                  second = best;
                  best = v;
                } else {
                  second = std::max(second, v);
                }
              }
            if (best > 0.0 && p > 1) margin = std::min(margin, best - second);
          }
        }
      }
    }
  }
  return margin;
}

void save_parameters(const std::string& path, const NetworkSpec& spec, const Parameters& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParamsIoError("cannot open '" + path + "' for writing");
  const char magic[8] = {'D', 'I', 'M', 'A', 'P', 'N', 'E', 'T'};
  os.write(magic, 8);
  const uint32_t version = 1;
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const uint64_t hash = spec.shape_hash();
  os.write(reinterpret_cast<const char*>(&hash), sizeof(hash));
  const uint32_t count = static_cast<uint32_t>(params.tensors.size());
  os.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const Tensor& t : params.tensors) {
    const uint32_t rank = static_cast<uint32_t>(t.shape.size());
    os.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (int d : t.shape) {
      const uint32_t dim = static_cast<uint32_t>(d);
      os.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    }
  }
  for (const Tensor& t : params.tensors)
    os.write(reinterpret_cast<const char*>(t.values.data()),
             static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  if (!os) throw ParamsIoError("short write to '" + path + "'");
}

Parameters load_parameters(const std::string& path, const NetworkSpec& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParamsIoError("cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "DIMAPNET", 8) != 0)
    throw ParamsIoError("'" + path + "' is not a dimap parameter file");
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!is || version != 1)
    throw ParamsIoError("'" + path + "': unsupported parameter file version");
  uint64_t hash = 0;
  is.read(reinterpret_cast<char*>(&hash), sizeof(hash));
  if (hash != expected.shape_hash())
    throw ShapeMismatchError("'" + path + "' was saved for a different network shape (expected " +
                             expected.describe() + ")");
  uint32_t count = 0;
  is.read(reinterpret_cast<char*>(&count), sizeof(count));
  Network net(expected);
  Parameters params = net.zero_params();
  if (!is || count != params.tensors.size())
    throw ShapeMismatchError("'" + path + "': tensor count mismatch");
  for (Tensor& t : params.tensors) {
    uint32_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    if (!is || rank != t.shape.size()) throw ShapeMismatchError("'" + path + "': rank mismatch");
    for (int d : t.shape) {
      uint32_t dim = 0;
      is.read(reinterpret_cast<char*>(&dim), sizeof(dim));
      if (!is || dim != static_cast<uint32_t>(d))
        throw ShapeMismatchError("'" + path + "': dimension mismatch");
    }
  }
  for (Tensor& t : params.tensors) {
    is.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!is) throw ParamsIoError("'" + path + "' is truncated");
  }
  return params;
}

}  // namespace dimap
