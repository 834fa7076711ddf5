#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splab/random.hpp"
#include "splab/tensor.hpp"

namespace splab {

enum class Activation { relu, tanh, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Shared hard-concrete stretch/temperature settings. Per-weight locations
// live on each layer.
struct GateConfig {
  double beta = 2.0 / 3.0;
  double gamma = -0.1;
  double zeta = 1.1;

  // Throws InvalidArgument unless gamma < 0 < 1 < zeta and beta > 0.
  void validate() const;
};

// How gate values are produced during a forward pass.
//   sampled:       fresh u ~ U(0,1) per weight, per forward call
//   deterministic: the noise-free estimate from the gate locations
enum class GateMode { sampled, deterministic };

std::string to_string(GateMode m);
GateMode gate_mode_from_string(const std::string& name);

// Low-rank weight: W = u * diag(s) * v^T with u [out x r], v [in x r].
struct FactoredWeight {
  Matrix u;
  Vector s;
  Matrix v;

  int rank() const { return static_cast<int>(s.size()); }
  Matrix reconstruct() const;
};

struct Layer {
  Matrix weight;  // [out x in]; empty when factored
  Vector bias;    // [out]
  Activation activation = Activation::identity;
  std::optional<Matrix> log_alpha;  // gate locations, same shape as weight
  std::optional<FactoredWeight> factored;

  int in_dim() const;
  int out_dim() const;
  bool gated() const { return log_alpha.has_value(); }
  bool is_factored() const { return factored.has_value(); }
  // Stored parameters (weights + biases, or factors + biases). Gate
  // locations are a training-time artifact and are not counted.
  std::size_t storage_count() const;
};

// Ordered dense layers. The final layer is always linear; heads apply their
// own transforms (argmax, softmax, tanh).
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers, GateConfig gate_config = {});

  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  std::size_t depth() const { return layers_.size(); }

  // Mutable access invalidates any outstanding forward cache.
  std::vector<Layer>& mutable_layers() {
    ++generation_;
    return layers_;
  }

  int input_dim() const;
  int output_dim() const;
  std::vector<int> layer_sizes() const;

  bool gated() const;
  bool factored() const;
  const GateConfig& gate_config() const { return gate_config_; }

  // Attaches a gate location to every weight, all initialised to `log_alpha`.
  void enable_gates(double log_alpha, GateConfig config = {});

  // Trainable tensors in a fixed order: per layer weight, bias, log_alpha.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  std::size_t storage_count() const;

  std::uint64_t generation() const { return generation_; }
  void touch() { ++generation_; }

  // Bitwise equality of architecture and every stored number.
  bool identical_to(const Network& other) const;

 private:
  void check_chain() const;

  std::vector<Layer> layers_;
  GateConfig gate_config_{};
  std::uint64_t generation_ = 0;
};

// Builds an MLP with `hidden` activations between layers and a linear output.
// Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero.
Network mlp_new(std::span<const int> layer_sizes, Activation hidden, std::uint64_t seed);

// Sum over layers of in*out + out.
std::size_t param_count(std::span<const int> layer_sizes);

struct LayerCache {
  Matrix input;   // [b x in]
  Matrix pre;     // [b x out] before activation
  Matrix output;  // [b x out]
  Matrix effective_weight;  // the weight actually used (gated or not)
  Matrix gate;              // z, empty for ungated layers
  Matrix gate_slope;        // dz/dlog_alpha, empty for ungated layers
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  std::uint64_t generation = 0;
  const Network* network = nullptr;

  const Matrix& output() const { return layers.back().output; }
};

// `rng` is required when the network is gated and mode is sampled.
ForwardCache forward(const Network& net, const Matrix& batch, GateMode mode = GateMode::deterministic,
                     Rng* rng = nullptr);

// Output only.
Matrix predict(const Network& net, const Matrix& batch, GateMode mode = GateMode::deterministic,
               Rng* rng = nullptr);

struct LayerGrad {
  Matrix weight;
  Vector bias;
  Matrix log_alpha;  // empty for ungated layers
};

struct Gradients {
  std::vector<LayerGrad> layers;
  Matrix input;  // d loss / d batch

  // Same order as Network::parameters().
  std::vector<std::span<double>> views();
  std::vector<std::span<const double>> views() const;

  static Gradients zeros_like(const Network& net);
  Gradients& operator+=(const Gradients& other);
  void scale(double factor);
};

// Reverse pass for the cached forward. Throws ConsistencyError if the cache
// belongs to another network or the network changed since the forward.
Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& output_grad);

}  // namespace splab
