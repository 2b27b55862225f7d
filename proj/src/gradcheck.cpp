#include "dimap/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dimap/rng.hpp"

namespace dimap {

NetworkSpec random_network_spec(uint64_t seed) {
  // Kept small on purpose: the layer code paths are identical at any size.
  Rng rng(seed);
  NetworkSpec spec;
  spec.input_height = spec.input_width = 2 * rng.uniform_int(1, 2) + 1;  // 3 or 5
  spec.input_channels = rng.uniform_int(1, 2);
  spec.aux_width = rng.uniform_int(0, 4);
  const int depth = rng.uniform_int(0, 2);
  int h = spec.input_height;
  for (int i = 0; i < depth; ++i) {
    ConvLayerSpec c;
    c.out_channels = rng.uniform_int(1, 4);
    c.kernel = std::min(h, 1 + 2 * rng.uniform_int(0, 1));  // 1 or 3
    c.stride = 1;
    switch (rng.uniform_int(0, 2)) {
      case 0: c.pool = PoolMode::none; break;
      case 1: c.pool = PoolMode::max; break;
      default: c.pool = PoolMode::sum; break;
    }
    c.pool_size = 2;
    if (h < c.kernel) break;
    spec.conv.push_back(c);
    h = h - c.kernel + 1;
    if (c.pool != PoolMode::none && h >= 2) h /= 2;
  }
  const int fc_depth = rng.uniform_int(0, 2);
  for (int i = 0; i < fc_depth; ++i) spec.fc.push_back(rng.uniform_int(2, 8));
  spec.dueling = rng.uniform_int(0, 1) == 1;
  spec.output_width = spec.dueling ? rng.uniform_int(2, 4) : rng.uniform_int(1, 3);
  return spec;
}

namespace {

// Rectifier sign pattern plus pool argmax choices: within one pattern the
// network output is affine in any single parameter.
std::string activation_pattern(const ForwardCache& cache) {
  std::string sig;
  for (const auto& pre : cache.conv_pre)
    for (double v : pre) sig.push_back(v > 0.0 ? '+' : '-');
  for (const auto& pre : cache.fc_pre)
    for (double v : pre) sig.push_back(v > 0.0 ? '+' : '-');
  for (const auto& args : cache.pool_arg) {
    const size_t at = sig.size();
    sig.resize(at + args.size() * sizeof(int));
    if (!args.empty()) std::memcpy(sig.data() + at, args.data(), args.size() * sizeof(int));
  }
  return sig;
}

}  // namespace

GradCheckResult finite_difference_check(const NetworkSpec& spec, uint64_t seed, double step,
                                        double tol, int batch, long corrupt_component) {
  spec.validate();
  Network net(spec);
  GradCheckResult result;
  result.spec = spec.describe();

  Rng rng(seed);
  Parameters params = net.init_params(rng.next_u64());
  Batch b;
  b.count = batch;
  b.grid_size = spec.input_channels * spec.input_height * spec.input_width;
  b.aux_size = spec.aux_width;
  b.grid.assign(static_cast<size_t>(b.count) * b.grid_size, 0.0);
  b.aux.assign(static_cast<size_t>(b.count) * b.aux_size, 0.0);
  for (double& v : b.grid) v = rng.uniform(-1.0, 1.0);
  for (double& v : b.aux) v = rng.uniform(-1.0, 1.0);

  std::vector<double> out_grads(static_cast<size_t>(b.count) * spec.output_width);
  for (double& g : out_grads) g = rng.uniform(-1.0, 1.0);

  ForwardCache center;
  net.forward(params, b, center);
  const std::string pattern = activation_pattern(center);
  Parameters analytic = net.zero_params();
  net.backward(params, b, center, out_grads, analytic);
  if (corrupt_component >= 0) {
    if (double* slot = analytic.flat(static_cast<size_t>(corrupt_component))) *slot += 0.5;
  }

  auto loss_of = [&](const std::vector<double>& out) {
    double acc = 0.0;
    for (size_t i = 0; i < out.size(); ++i) acc += out[i] * out_grads[i];
    return acc;
  };

  result.components = params.total_size();
  ForwardCache probe;
  for (size_t t = 0; t < params.tensors.size(); ++t) {
    for (size_t i = 0; i < params.tensors[t].values.size(); ++i) {
      const double saved = params.tensors[t].values[i];
      params.tensors[t].values[i] = saved + step;
      const double up = loss_of(net.forward(params, b, probe));
      const bool up_same = activation_pattern(probe) == pattern;
      params.tensors[t].values[i] = saved - step;
      const double down = loss_of(net.forward(params, b, probe));
      const bool down_same = activation_pattern(probe) == pattern;
      params.tensors[t].values[i] = saved;
      if (!up_same || !down_same) {
        result.skipped += 1;
        continue;
      }
      result.checked += 1;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic.tensors[t].values[i];
      const double rel = std::abs(fd - an) / std::max(1.0, std::abs(fd) + std::abs(an));
      result.max_rel_error = std::max(result.max_rel_error, rel);
    }
  }
  result.pass = result.max_rel_error <= tol && result.checked * 2 >= result.components;
  return result;
}

}  // namespace dimap
