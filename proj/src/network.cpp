#include "coegan/network.hpp"

namespace coegan {

std::string to_string(Role role) { return role == Role::Generator ? "generator" : "discriminator"; }

Role parse_role(const std::string& s) {
  if (s == "generator") return Role::Generator;
  if (s == "discriminator") return Role::Discriminator;
  throw FormatError("unknown role '" + s + "'");
}

void Network::add_layer(Layer layer) {
  const Shape prev = layers_.empty() ? input_shape_ : layers_.back().geom.out_shape;
  if (shape_size(prev) != shape_size(layer.geom.in_shape)) {
    throw ShapeError("layer " + std::to_string(layers_.size()) + " (" + to_string(layer.geom.kind) +
                     "): expects " + shape_string(layer.geom.in_shape) + " but previous stage produces " +
                     shape_string(prev));
  }
  layer.index = layers_.size();
  layers_.push_back(std::move(layer));
}

Shape Network::output_shape() const { return layers_.empty() ? input_shape_ : layers_.back().geom.out_shape; }

void Network::check_input(const Tensor& x) const {
  if (x.rank() < 1 || x.sample_size() != shape_size(input_shape_)) {
    throw ShapeError(to_string(role_) + " network expects per-sample shape " + shape_string(input_shape_) +
                     ", got " + shape_string(x.shape));
  }
}

Tensor Network::forward(const Tensor& x) const {
  check_input(x);
  Tensor h = x;
  for (const Layer& layer : layers_) h = layer_forward(layer, h);
  return h;
}

Tensor Network::forward(const Tensor& x, ForwardTrace& trace) const {
  check_input(x);
  trace.caches.assign(layers_.size(), {});
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) h = layer_forward(layers_[i], h, &trace.caches[i]);
  return h;
}

NetworkGradients Network::backward(const ForwardTrace& trace, const Tensor& upstream, bool need_input_grad) const {
  if (trace.caches.size() != layers_.size()) throw ShapeError("forward trace does not belong to this network");
  NetworkGradients grads;
  grads.params.resize(2 * layers_.size());
  Tensor g = upstream;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool want_input = need_input_grad || i > 0;
    LayerGrads<float> lg = layer_backward(layers_[i], trace.caches[i], g, want_input);
    grads.params[2 * i] = std::move(lg.weight);
    grads.params[2 * i + 1] = std::move(lg.bias);
    if (want_input) {
      g = std::move(lg.input);
      // Undo any implicit reshape so the previous layer sees its own output shape.
      if (i > 0) g.shape = trace.caches[i - 1].output.shape;
    }
  }
  if (need_input_grad) {
    g.shape = trace.caches.empty() ? upstream.shape : trace.caches.front().input.shape;
    grads.input = std::move(g);
  }
  return grads;
}

Tensor Network::hidden_features(const Tensor& x) const {
  if (layers_.size() < 2) {
    throw PreconditionError("feature extraction needs a network with at least one hidden layer");
  }
  check_input(x);
  Tensor h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = layer_forward(layers_[i], h);
  h.shape = {h.batch(), h.sample_size()};
  return h;
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  out.reserve(2 * layers_.size());
  for (Layer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

}  // namespace coegan
