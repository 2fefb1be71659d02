#include "ddtas/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "ddtas/errors.hpp"

namespace ddtas {

namespace {

void check_same_shape(const EmbeddingNet& net, const ParamGrads& grads) {
  if (grads.layers.size() != net.num_layers()) {
    throw std::invalid_argument("gradient layer count does not match network");
  }
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const auto& p = net.layers()[k];
    const auto& g = grads.layers[k];
    if (p.weight.rows() != g.weight.rows() || p.weight.cols() != g.weight.cols() ||
        p.bias.size() != g.bias.size()) {
      throw std::invalid_argument("gradient shape mismatch at layer " + std::to_string(k));
    }
  }
}

std::vector<LayerParams> zero_layers(const std::vector<int>& dims) {
  std::vector<LayerParams> layers;
  layers.reserve(dims.size() - 1);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    layers.push_back({Eigen::MatrixXd::Zero(dims[k + 1], dims[k]), Eigen::VectorXd::Zero(dims[k + 1])});
  }
  return layers;
}

}  // namespace

EmbeddingNet::EmbeddingNet(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
  if (dims_.size() < 2) {
    throw std::invalid_argument("EmbeddingNet needs at least input and output dims");
  }
  for (int d : dims_) {
    if (d <= 0) throw std::invalid_argument("layer dims must be positive");
  }
  layers_ = zero_layers(dims_);
}

EmbeddingNet EmbeddingNet::he_uniform(std::vector<int> layer_dims, std::uint64_t seed) {
  EmbeddingNet net(std::move(layer_dims));
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    // Fill in storage order so the stream consumption is layout-independent of Eigen internals.
    double* data = layer.weight.data();
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) data[i] = dist(rng);
  }
  return net;
}

void EmbeddingNet::set_norm_floor(double floor) {
  if (!(floor >= 0.0) || !std::isfinite(floor)) {
    throw std::invalid_argument("norm floor must be finite and >= 0");
  }
  norm_floor_ = floor;
}

bool EmbeddingNet::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

ParamGrads ParamGrads::zeros_like(const EmbeddingNet& net) {
  return ParamGrads{zero_layers(net.layer_dims())};
}

bool ParamGrads::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

ForwardCache forward_cached(const EmbeddingNet& net, const Eigen::MatrixXd& inputs) {
  if (net.num_layers() == 0) throw std::invalid_argument("forward on an empty network");
  if (inputs.rows() == 0) throw std::invalid_argument("forward on an empty batch");
  if (inputs.cols() != net.input_dim()) {
    throw std::invalid_argument("input dim " + std::to_string(inputs.cols()) +
                                " does not match network input dim " +
                                std::to_string(net.input_dim()));
  }

  ForwardCache cache;
  cache.activations.reserve(net.num_layers());
  cache.activations.push_back(inputs);
  const auto& layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    Eigen::MatrixXd z = cache.activations.back() * layers[k].weight.transpose();
    z.rowwise() += layers[k].bias.transpose();
    if (k + 1 < layers.size()) {
      cache.activations.push_back(z.cwiseMax(0.0));
    } else {
      cache.pre_norm = std::move(z);
    }
  }

  const Eigen::Index n = cache.pre_norm.rows();
  cache.norms.resize(n);
  cache.output.resize(n, cache.pre_norm.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    double norm = cache.pre_norm.row(i).norm();
    if (net.norm_floor() > 0.0) {
      norm = std::max(norm, net.norm_floor());
    } else if (norm == 0.0) {
      throw DegenerateEmbeddingError(static_cast<std::size_t>(i));
    }
    cache.norms[i] = norm;
    cache.output.row(i) = cache.pre_norm.row(i) / norm;
  }
  return cache;
}

Eigen::MatrixXd forward(const EmbeddingNet& net, const Eigen::MatrixXd& inputs) {
  return forward_cached(net, inputs).output;
}

ParamGrads backward(const EmbeddingNet& net, const Eigen::MatrixXd& inputs,
                    const Eigen::MatrixXd& grad_wrt_embeddings) {
  return backward(net, forward_cached(net, inputs), grad_wrt_embeddings);
}

ParamGrads backward(const EmbeddingNet& net, const ForwardCache& cache,
                    const Eigen::MatrixXd& grad_wrt_embeddings) {
  if (grad_wrt_embeddings.rows() != cache.output.rows() ||
      grad_wrt_embeddings.cols() != cache.output.cols()) {
    throw std::invalid_argument("upstream gradient shape does not match forward output");
  }

  // Through u = v / ||v||: dv = (g - u (u.g)) / ||v||. With the floor active
  // the divisor is a constant and the Jacobian is I / floor.
  const Eigen::Index n = cache.output.rows();
  Eigen::MatrixXd delta(n, cache.output.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = cache.norms[i];
    const bool clamped = net.norm_floor() > 0.0 && cache.pre_norm.row(i).norm() < net.norm_floor();
    if (clamped) {
      delta.row(i) = grad_wrt_embeddings.row(i) / norm;
    } else {
      const auto u = cache.output.row(i);
      const double radial = u.dot(grad_wrt_embeddings.row(i));
      delta.row(i) = (grad_wrt_embeddings.row(i) - radial * u) / norm;
    }
  }

  ParamGrads grads = ParamGrads::zeros_like(net);
  const auto& layers = net.layers();
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Eigen::MatrixXd& a_prev = cache.activations[k];
    grads.layers[k].weight = delta.transpose() * a_prev;
    grads.layers[k].bias = delta.colwise().sum().transpose();
    if (k > 0) {
      Eigen::MatrixXd upstream = delta * layers[k].weight;
      // ReLU mask: derivative 0 where the activation was clipped.
      delta = upstream.cwiseProduct((a_prev.array() > 0.0).cast<double>().matrix());
    }
  }
  return grads;
}

EmbeddingNet sgd_step(const EmbeddingNet& net, const ParamGrads& grads, double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  check_same_shape(net, grads);
  EmbeddingNet next = net;
  for (std::size_t k = 0; k < next.num_layers(); ++k) {
    next.layers()[k].weight -= lr * grads.layers[k].weight;
    next.layers()[k].bias -= lr * grads.layers[k].bias;
  }
  return next;
}

AdamState AdamState::init(const EmbeddingNet& net) {
  return AdamState{ParamGrads::zeros_like(net), ParamGrads::zeros_like(net), 0};
}

AdamResult adam_step(const AdamState& state, const EmbeddingNet& net, const ParamGrads& grads,
                     const AdamOptions& opts) {
  check_same_shape(net, grads);
  check_same_shape(net, state.first_moment);
  check_same_shape(net, state.second_moment);

  AdamResult out{net, state};
  out.state.step += 1;
  const double t = static_cast<double>(out.state.step);
  const double bias1 = 1.0 - std::pow(opts.beta1, t);
  const double bias2 = 1.0 - std::pow(opts.beta2, t);

  auto update = [&](Eigen::Ref<Eigen::MatrixXd> param, Eigen::Ref<Eigen::MatrixXd> m,
                    Eigen::Ref<Eigen::MatrixXd> v, const Eigen::Ref<const Eigen::MatrixXd>& g) {
    m = opts.beta1 * m + (1.0 - opts.beta1) * g;
    v = opts.beta2 * v + (1.0 - opts.beta2) * g.cwiseProduct(g);
    auto m_hat = m.array() / bias1;
    auto v_hat = v.array() / bias2;
    param.array() -= opts.lr * m_hat / (v_hat.sqrt() + opts.epsilon);
  };

  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    auto& p = out.net.layers()[k];
    auto& m = out.state.first_moment.layers[k];
    auto& v = out.state.second_moment.layers[k];
    const auto& g = grads.layers[k];
    update(p.weight, m.weight, v.weight, g.weight);
    update(p.bias, m.bias, v.bias, g.bias);
  }
  return out;
}

std::size_t param_count(const EmbeddingNet& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers()) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

namespace {

Eigen::VectorXd flatten_layers(const std::vector<LayerParams>& layers, std::size_t total) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(total));
  Eigen::Index pos = 0;
  for (const auto& l : layers) {
    flat.segment(pos, l.weight.size()) = l.weight.reshaped();
    pos += l.weight.size();
    flat.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
  return flat;
}

void unflatten_into(std::vector<LayerParams>& layers, const Eigen::VectorXd& flat) {
  Eigen::Index pos = 0;
  for (auto& l : layers) {
    l.weight.reshaped() = flat.segment(pos, l.weight.size());
    pos += l.weight.size();
    l.bias = flat.segment(pos, l.bias.size());
    pos += l.bias.size();
  }
}

}  // namespace

Eigen::VectorXd flatten(const EmbeddingNet& net) { return flatten_layers(net.layers(), param_count(net)); }

Eigen::VectorXd flatten(const ParamGrads& grads) {
  std::size_t total = 0;
  for (const auto& l : grads.layers) total += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return flatten_layers(grads.layers, total);
}

EmbeddingNet unflatten(const EmbeddingNet& shape, const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != param_count(shape)) {
    throw std::invalid_argument("flat parameter vector has wrong length");
  }
  EmbeddingNet net = shape;
  unflatten_into(net.layers(), flat);
  return net;
}

ParamGrads unflatten_grads(const EmbeddingNet& shape, const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != param_count(shape)) {
    throw std::invalid_argument("flat gradient vector has wrong length");
  }
  ParamGrads g = ParamGrads::zeros_like(shape);
  unflatten_into(g.layers, flat);
  return g;
}

}  // namespace ddtas
