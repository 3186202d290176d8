#pragma once

#include <string>
#include <vector>

#include "coegan/layers.hpp"

namespace coegan {

enum class Role { Generator, Discriminator };

std::string to_string(Role role);
Role parse_role(const std::string& s);

struct ForwardTrace {
  std::vector<LayerCache<float>> caches;
};

// Parameter gradients are ordered weight0, bias0, weight1, bias1, ...
// matching Network::parameters().
struct NetworkGradients {
  Tensor input;
  std::vector<Tensor> params;
};

// A sequential chain of layers. Consecutive layers must agree on the number
// of values per sample; the shapes themselves may differ (flatten/reshape).
class Network {
 public:
  Network() = default;
  Network(Role role, Shape input_shape) : role_(role), input_shape_(std::move(input_shape)) {}

  void add_layer(Layer layer);

  Role role() const noexcept { return role_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  Shape output_shape() const;
  std::size_t size() const noexcept { return layers_.size(); }

  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  Tensor forward(const Tensor& x) const;
  Tensor forward(const Tensor& x, ForwardTrace& trace) const;

  NetworkGradients backward(const ForwardTrace& trace, const Tensor& upstream, bool need_input_grad) const;

  // Activations of the layer feeding the final output layer, one flattened
  // row per sample.
  Tensor hidden_features(const Tensor& x) const;

  std::vector<Tensor*> parameters();
  std::size_t parameter_count() const;

 private:
  void check_input(const Tensor& x) const;

  Role role_ = Role::Discriminator;
  Shape input_shape_;
  std::vector<Layer> layers_;
};

}  // namespace coegan
