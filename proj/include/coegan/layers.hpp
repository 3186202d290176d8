#pragma once

#include <cstddef>
#include <string>

#include "coegan/rng.hpp"
#include "coegan/tensor.hpp"

namespace coegan {

enum class LayerKind { Linear, Conv2d, Deconv2d };
enum class Activation { None, ReLU, ELU, LeakyReLU, Sigmoid, Tanh };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
LayerKind parse_layer_kind(const std::string& s);
Activation parse_activation(const std::string& s);

inline constexpr double kLeakyReluSlope = 0.2;

// Everything about a layer that is fixed by its configuration. Per-sample
// shapes: {features} for Linear inputs/outputs, {C, H, W} for Conv/Deconv.
struct Geometry {
  LayerKind kind = LayerKind::Linear;
  Shape in_shape;
  Shape out_shape;
  std::size_t in_channels = 0;  // in_features for Linear
  std::size_t out_channels = 0;  // out_features for Linear
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding = 0;

  Shape weight_shape() const;
  Shape bias_shape() const { return {out_channels}; }
  std::size_t fan_in() const;
  std::size_t fan_out() const;

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

// Linear layer over a flattened input of `in_features` values.
Geometry linear_geometry(std::size_t in_features, std::size_t out_features);

// Strided convolution; defaults halve the spatial dims (stride 2, pad k/2).
Geometry conv_geometry(const Shape& in_chw, std::size_t out_channels, std::size_t kernel);
Geometry conv_geometry(const Shape& in_chw, std::size_t out_channels, std::size_t kernel,
                       std::size_t stride, std::size_t padding);

// Transposed convolution; defaults exactly double the spatial dims for any k >= 2.
Geometry deconv_geometry(const Shape& in_chw, std::size_t out_channels, std::size_t kernel);
Geometry deconv_geometry(const Shape& in_chw, std::size_t out_channels, std::size_t kernel,
                         std::size_t stride, std::size_t padding, std::size_t output_padding);

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);
std::size_t deconv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                               std::size_t output_padding);

template <class T>
struct BasicLayer {
  Geometry geom;
  Activation activation = Activation::None;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  std::size_t index = 0;  // position inside the owning network, for diagnostics

  BasicLayer() = default;
  BasicLayer(Geometry g, Activation act, std::size_t idx = 0);
};

using Layer = BasicLayer<float>;

// Kaiming-uniform for the ReLU family, Xavier-uniform otherwise; zero bias.
template <class T>
void initialize(BasicLayer<T>& layer, Rng& rng);

// Values saved by a forward pass that backward needs.
template <class T>
struct LayerCache {
  BasicTensor<T> input;
  BasicTensor<T> pre_activation;
  BasicTensor<T> output;
};

template <class T>
struct LayerGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

// Input may be any tensor whose batch entries hold exactly as many values as
// the layer's per-sample input shape (implicit flatten / reshape).
template <class T>
BasicTensor<T> layer_forward(const BasicLayer<T>& layer, const BasicTensor<T>& input,
                             LayerCache<T>* cache = nullptr);

template <class T>
LayerGrads<T> layer_backward(const BasicLayer<T>& layer, const LayerCache<T>& cache,
                             const BasicTensor<T>& upstream, bool need_input_grad = true);

template <class T>
LayerGrads<T> layer_backward(const BasicLayer<T>& layer, const BasicTensor<T>& input,
                             const BasicTensor<T>& upstream);

template <class T>
T activate(Activation act, T x);

}  // namespace coegan
