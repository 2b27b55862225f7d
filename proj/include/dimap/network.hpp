#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dimap {

enum class PoolMode { none, max, sum };

/// One convolution + rectifier + pooling stage. Convolutions are "valid"
/// (no padding); pooling uses a pool_size window with matching stride and is
/// skipped when the feature map is smaller than the window.
struct ConvLayerSpec {
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  PoolMode pool = PoolMode::max;
  int pool_size = 2;
};

/// Shape of a value network: a conv stack over a small multi-channel grid,
/// auxiliary scalar features concatenated before the fully connected stack,
/// and either a plain linear head or a dueling head (state value plus
/// mean-centered advantages; baseline networks only).
struct NetworkSpec {
  int input_height = 0;
  int input_width = 0;
  int input_channels = 0;  // 0 = no grid input at all (aux features only)
  int aux_width = 0;
  std::vector<ConvLayerSpec> conv;
  std::vector<int> fc;  // hidden widths, relu after each
  int output_width = 1;
  bool dueling = false;

  void validate() const;         // throws std::invalid_argument with the reason
  uint64_t shape_hash() const;   // stable across runs; stored in parameter files
  std::string describe() const;  // human-readable shape summary
};

/// Flat storage for one named tensor of a parameter set.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  size_t size() const { return values.size(); }
};

struct Parameters {
  std::vector<Tensor> tensors;

  size_t total_size() const;
  void set_zero();
  double* flat(size_t component, size_t* tensor_out = nullptr);  // linear addressing for checks
};

struct AdamConfig {
  double learning_rate = 0.0003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer state; accumulators are shaped exactly like the
/// parameters they update.
struct AdamState {
  AdamConfig config;
  Parameters first_moment;
  Parameters second_moment;
  long step = 0;
};

AdamState make_adam_state(const Parameters& like, const AdamConfig& config);

/// One bias-corrected adaptive-moment update, in place.
void adam_step(Parameters& params, const Parameters& grads, AdamState& state);

/// A batch of network inputs: per sample, `input_channels` grids of
/// input_height x input_width values plus `aux_width` scalars.
struct Batch {
  int count = 0;
  int grid_size = 0;  // channels * height * width
  int aux_size = 0;
  std::vector<double> grid;  // count * grid_size, sample-major
  std::vector<double> aux;   // count * aux_size

  void reserve_samples(int n) {
    grid.reserve(static_cast<size_t>(n) * grid_size);
    aux.reserve(static_cast<size_t>(n) * aux_size);
  }
};

/// Intermediates retained by the caching forward pass for use in backward.
struct ForwardCache {
  int count = 0;
  std::vector<std::vector<double>> conv_in;   // input activations of each conv layer
  std::vector<std::vector<double>> conv_pre;  // conv outputs before the rectifier
  std::vector<std::vector<int>> pool_arg;     // winning input index per max-pool output
  std::vector<double> fc_in;                  // flattened conv output + aux features
  std::vector<std::vector<double>> fc_pre;    // hidden pre-activations
  std::vector<double> head_in;
  std::vector<double> out;
};

/// Feed-forward evaluator for a fixed NetworkSpec. Forward and backward are
/// deterministic: identical parameters and inputs give bitwise identical
/// results regardless of how callers split their batches.
class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }

  /// Fan-in-scaled uniform weights, zero biases, fully determined by `seed`.
  Parameters init_params(uint64_t seed) const;
  Parameters zero_params() const;

  /// Batched evaluation; returns count * output_width values.
  std::vector<double> forward(const Parameters& params, const Batch& batch) const;

  /// Evaluation that retains every intermediate needed by backward().
  std::vector<double> forward(const Parameters& params, const Batch& batch,
                              ForwardCache& cache) const;

  /// Exact gradients of sum_i dot(output_grads_i, output_i) with respect to
  /// every parameter, accumulated into `grads` (which is zeroed first).
  void backward(const Parameters& params, const Batch& batch, const ForwardCache& cache,
                const std::vector<double>& output_grads, Parameters& grads) const;

  /// Smallest distance of any rectifier pre-activation from its kink and of
  /// any max-pool window from a tie, over the whole batch. Finite-difference
  /// checks use this to reject badly conditioned probe points.
  double kink_margin(const Parameters& params, const Batch& batch) const;

  int flat_size() const { return flat_size_; }

 private:
  struct StageDims {
    int in_c, in_h, in_w;
    int conv_h, conv_w;  // after conv, before pool
    bool pooled;
    int out_h, out_w;
  };

  NetworkSpec spec_;
  std::vector<StageDims> stages_;
  int flat_size_ = 0;   // conv output scalars per sample
  int trunk_width_ = 0; // width entering the head
};

struct ParamsIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeMismatchError : ParamsIoError {
  using ParamsIoError::ParamsIoError;
};

/// Parameter file: magic + version + spec hash + tensor shapes, then the
/// values as little-endian float64. load verifies the header against
/// `expected` and throws ParamsIoError / ShapeMismatchError on mismatch.
void save_parameters(const std::string& path, const NetworkSpec& spec, const Parameters& params);
Parameters load_parameters(const std::string& path, const NetworkSpec& expected);

}  // namespace dimap
