#include "splab/network.hpp"

#include <cmath>
#include <cstring>

#include "splab/errors.hpp"
#include "splab/gates.hpp"

namespace splab {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::identity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw InvalidArgument("unknown activation '" + name + "'");
}

void GateConfig::validate() const {
  if (!(gamma < 0.0 && zeta > 1.0 && beta > 0.0)) {
    throw InvalidArgument("gate config requires gamma < 0 < 1 < zeta and beta > 0");
  }
}

std::string to_string(GateMode m) { return m == GateMode::sampled ? "sampled" : "deterministic"; }

GateMode gate_mode_from_string(const std::string& name) {
  if (name == "sampled") return GateMode::sampled;
  if (name == "deterministic") return GateMode::deterministic;
  throw InvalidArgument("unknown gate mode '" + name + "'");
}

Matrix FactoredWeight::reconstruct() const { return u * s.asDiagonal() * v.transpose(); }

int Layer::in_dim() const {
  return is_factored() ? static_cast<int>(factored->v.rows()) : static_cast<int>(weight.cols());
}

int Layer::out_dim() const {
  return is_factored() ? static_cast<int>(factored->u.rows()) : static_cast<int>(weight.rows());
}

std::size_t Layer::storage_count() const {
  const auto b = static_cast<std::size_t>(bias.size());
  if (is_factored()) {
    return static_cast<std::size_t>(factored->u.size() + factored->s.size() + factored->v.size()) + b;
  }
  return static_cast<std::size_t>(weight.size()) + b;
}

Network::Network(std::vector<Layer> layers, GateConfig gate_config)
    : layers_(std::move(layers)), gate_config_(gate_config) {
  check_chain();
}

void Network::check_chain() const {
  if (layers_.empty()) throw InvalidArchitecture("network has no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.in_dim() < 1 || l.out_dim() < 1) throw InvalidArchitecture("layer with zero width");
    if (l.bias.size() != l.out_dim()) throw InvalidArchitecture("bias length does not match layer width");
    if (l.gated() && l.is_factored()) throw InvalidArchitecture("a layer cannot be both gated and factored");
    if (l.gated() && (l.log_alpha->rows() != l.weight.rows() || l.log_alpha->cols() != l.weight.cols())) {
      throw InvalidArchitecture("gate locations do not match weight shape");
    }
    if (i + 1 < layers_.size() && l.out_dim() != layers_[i + 1].in_dim()) {
      throw InvalidArchitecture("layer " + std::to_string(i) + " output does not chain into layer " +
                                std::to_string(i + 1));
    }
  }
  if (layers_.back().activation != Activation::identity) {
    throw InvalidArchitecture("final layer must be linear");
  }
}

int Network::input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
int Network::output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::vector<int> Network::layer_sizes() const {
  std::vector<int> sizes;
  if (layers_.empty()) return sizes;
  sizes.push_back(input_dim());
  for (const auto& l : layers_) sizes.push_back(l.out_dim());
  return sizes;
}

bool Network::gated() const {
  for (const auto& l : layers_)
    if (l.gated()) return true;
  return false;
}

bool Network::factored() const {
  for (const auto& l : layers_)
    if (l.is_factored()) return true;
  return false;
}

void Network::enable_gates(double log_alpha, GateConfig config) {
  config.validate();
  gate_config_ = config;
  for (auto& l : layers_) {
    if (l.is_factored()) throw InvalidArchitecture("cannot gate a factored layer");
    l.log_alpha = Matrix::Constant(l.weight.rows(), l.weight.cols(), log_alpha);
  }
  ++generation_;
}

std::vector<std::span<double>> Network::parameters() {
  ++generation_;
  std::vector<std::span<double>> out;
  for (auto& l : layers_) {
    if (l.is_factored()) throw InvalidArchitecture("factored layers are not trainable");
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    if (l.gated()) out.emplace_back(l.log_alpha->data(), static_cast<std::size_t>(l.log_alpha->size()));
  }
  return out;
}

std::vector<std::span<const double>> Network::parameters() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers_) {
    if (l.is_factored()) throw InvalidArchitecture("factored layers are not trainable");
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    if (l.gated()) out.emplace_back(l.log_alpha->data(), static_cast<std::size_t>(l.log_alpha->size()));
  }
  return out;
}

std::size_t Network::storage_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.storage_count();
  return n;
}

namespace {

template <class A, class B>
bool same_bits(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

}  // namespace

bool Network::identical_to(const Network& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  if (std::memcmp(&gate_config_, &other.gate_config_, sizeof(GateConfig)) != 0) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.activation != b.activation || a.gated() != b.gated() || a.is_factored() != b.is_factored()) return false;
    if (!same_bits(a.weight, b.weight) || !same_bits(a.bias, b.bias)) return false;
    if (a.gated() && !same_bits(*a.log_alpha, *b.log_alpha)) return false;
    if (a.is_factored()) {
      if (!same_bits(a.factored->u, b.factored->u) || !same_bits(a.factored->s, b.factored->s) ||
          !same_bits(a.factored->v, b.factored->v))
        return false;
    }
  }
  return true;
}

Network mlp_new(std::span<const int> layer_sizes, Activation hidden, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw InvalidArchitecture("need at least an input and an output size");
  for (int s : layer_sizes)
    if (s < 1) throw InvalidArchitecture("layer sizes must be >= 1");

  Rng rng(seed);
  std::vector<Layer> layers;
  layers.reserve(layer_sizes.size() - 1);
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const int in = layer_sizes[i];
    const int out = layer_sizes[i + 1];
    const double bound = std::sqrt(6.0 / in);
    Layer l;
    l.weight.resize(out, in);
    for (Eigen::Index k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = rng.uniform(-bound, bound);
    l.bias = Vector::Zero(out);
    l.activation = (i + 2 == layer_sizes.size()) ? Activation::identity : hidden;
    layers.push_back(std::move(l));
  }
  return Network(std::move(layers));
}

std::size_t param_count(std::span<const int> layer_sizes) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const auto in = static_cast<std::size_t>(layer_sizes[i]);
    const auto out = static_cast<std::size_t>(layer_sizes[i + 1]);
    n += in * out + out;
  }
  return n;
}

namespace {

void activate(Activation a, const Matrix& pre, Matrix& out) {
  switch (a) {
    case Activation::relu:
      out = pre.cwiseMax(0.0);
      break;
    case Activation::tanh:
      out = pre.array().tanh().matrix();
      break;
    case Activation::identity:
      out = pre;
      break;
  }
}

}  // namespace

ForwardCache forward(const Network& net, const Matrix& batch, GateMode mode, Rng* rng) {
  if (net.depth() == 0) throw InvalidArchitecture("empty network");
  if (batch.cols() != net.input_dim()) {
    throw ShapeError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                     std::to_string(net.input_dim()));
  }
  ForwardCache cache;
  cache.generation = net.generation();
  cache.network = &net;
  cache.layers.resize(net.depth());

  const Matrix* x = &batch;
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const Layer& l = net.layer(i);
    LayerCache& c = cache.layers[i];
    c.input = *x;
    if (l.is_factored()) {
      const auto& f = *l.factored;
      c.pre = ((c.input * f.v) * f.s.asDiagonal()) * f.u.transpose();
    } else if (l.gated()) {
      c.gate = gate_values(*l.log_alpha, net.gate_config(), mode, rng, &c.gate_slope);
      c.effective_weight = l.weight.cwiseProduct(c.gate);
      c.pre.noalias() = c.input * c.effective_weight.transpose();
    } else {
      c.pre.noalias() = c.input * l.weight.transpose();
    }
    c.pre.rowwise() += l.bias.transpose();
    activate(l.activation, c.pre, c.output);
    x = &c.output;
  }
  return cache;
}

Matrix predict(const Network& net, const Matrix& batch, GateMode mode, Rng* rng) {
  auto cache = forward(net, batch, mode, rng);
  return std::move(cache.layers.back().output);
}

std::vector<std::span<double>> Gradients::views() {
  std::vector<std::span<double>> out;
  for (auto& g : layers) {
    out.emplace_back(g.weight.data(), static_cast<std::size_t>(g.weight.size()));
    out.emplace_back(g.bias.data(), static_cast<std::size_t>(g.bias.size()));
    if (g.log_alpha.size() > 0) out.emplace_back(g.log_alpha.data(), static_cast<std::size_t>(g.log_alpha.size()));
  }
  return out;
}

std::vector<std::span<const double>> Gradients::views() const {
  std::vector<std::span<const double>> out;
  for (const auto& g : layers) {
    out.emplace_back(g.weight.data(), static_cast<std::size_t>(g.weight.size()));
    out.emplace_back(g.bias.data(), static_cast<std::size_t>(g.bias.size()));
    if (g.log_alpha.size() > 0) out.emplace_back(g.log_alpha.data(), static_cast<std::size_t>(g.log_alpha.size()));
  }
  return out;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  g.layers.resize(net.depth());
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const Layer& l = net.layer(i);
    g.layers[i].weight = Matrix::Zero(l.weight.rows(), l.weight.cols());
    g.layers[i].bias = Vector::Zero(l.bias.size());
    if (l.gated()) g.layers[i].log_alpha = Matrix::Zero(l.weight.rows(), l.weight.cols());
  }
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.layers.size() != layers.size()) throw ShapeError("gradient structures differ");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += other.layers[i].weight;
    layers[i].bias += other.layers[i].bias;
    if (layers[i].log_alpha.size() > 0) layers[i].log_alpha += other.layers[i].log_alpha;
  }
  if (input.size() > 0 && other.input.size() == input.size()) input += other.input;
  return *this;
}

void Gradients::scale(double factor) {
  for (auto& g : layers) {
    g.weight *= factor;
    g.bias *= factor;
    if (g.log_alpha.size() > 0) g.log_alpha *= factor;
  }
  input *= factor;
}

Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& output_grad) {
  if (cache.network != &net || cache.generation != net.generation() || cache.layers.size() != net.depth()) {
    throw ConsistencyError("forward cache does not belong to this network state");
  }
  const Matrix& out = cache.output();
  if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols()) {
    throw ShapeError("loss gradient shape does not match network output");
  }

  Gradients grads;
  grads.layers.resize(net.depth());
  Matrix upstream = output_grad;
  for (std::size_t k = net.depth(); k-- > 0;) {
    const Layer& l = net.layer(k);
    const LayerCache& c = cache.layers[k];
    if (l.is_factored()) throw ConsistencyError("factored layers do not support backward");

    Matrix delta;
    switch (l.activation) {
      case Activation::relu:
        delta = upstream.cwiseProduct((c.pre.array() > 0.0).cast<double>().matrix());
        break;
      case Activation::tanh:
        delta = upstream.cwiseProduct((1.0 - c.output.array().square()).matrix());
        break;
      case Activation::identity:
        delta = std::move(upstream);
        break;
    }

    LayerGrad& g = grads.layers[k];
    Matrix effective_grad = delta.transpose() * c.input;  // [out x in]
    g.bias = delta.colwise().sum().transpose();
    if (l.gated()) {
      g.weight = effective_grad.cwiseProduct(c.gate);
      g.log_alpha = effective_grad.cwiseProduct(l.weight).cwiseProduct(c.gate_slope);
      upstream.noalias() = delta * c.effective_weight;
    } else {
      g.weight = std::move(effective_grad);
      upstream.noalias() = delta * l.weight;
    }
  }
  grads.input = std::move(upstream);
  return grads;
}

}  // namespace splab
