#include "coegan/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace coegan {

namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapR = Eigen::Map<MatR<T>>;
template <class T>
using CMapR = Eigen::Map<const MatR<T>>;

bool relu_family(Activation a) {
  return a == Activation::ReLU || a == Activation::ELU || a == Activation::LeakyReLU;
}

std::string layer_label(LayerKind kind, std::size_t index) {
  return "layer " + std::to_string(index) + " (" + to_string(kind) + ")";
}

template <class T>
void check_input(const BasicLayer<T>& layer, const BasicTensor<T>& input) {
  const std::size_t expected = shape_size(layer.geom.in_shape);
  if (input.rank() < 1 || input.sample_size() != expected) {
    throw ShapeError(layer_label(layer.geom.kind, layer.index) + ": expected per-sample shape " +
                     shape_string(layer.geom.in_shape) + " (" + std::to_string(expected) +
                     " values), got " + shape_string(input.shape));
  }
}

template <class T>
T activation_grad(Activation act, T pre, T out) {
  switch (act) {
    case Activation::None: return T(1);
    case Activation::ReLU: return pre > T(0) ? T(1) : T(0);
    case Activation::ELU: return pre > T(0) ? T(1) : out + T(1);
    case Activation::LeakyReLU: return pre > T(0) ? T(1) : T(kLeakyReluSlope);
    case Activation::Sigmoid: return out * (T(1) - out);
    case Activation::Tanh: return T(1) - out * out;
  }
  return T(1);
}

// Patch matrix of a (N, C, H, W) image batch for a convolution producing
// (Ho, Wo): rows index (c, ky, kx), columns index (n, oy, ox).
template <class T>
void im2col(const T* src, std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, T* cols) {
  const std::size_t ncols = n * ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((ci * k + ky) * k + kx) * ncols;
        for (std::size_t b = 0; b < n; ++b) {
          const T* img = src + (b * c + ci) * h * w;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            T* dst = row + (b * ho + oy) * wo;
            if (iy < 0 || iy >= static_cast<long>(h)) {
              std::fill(dst, dst + wo, T(0));
              continue;
            }
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              dst[ox] = (ix < 0 || ix >= static_cast<long>(w)) ? T(0) : img[iy * static_cast<long>(w) + ix];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds patch columns back onto the image batch.
template <class T>
void col2im(const T* cols, std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, T* dst) {
  std::fill(dst, dst + n * c * h * w, T(0));
  const std::size_t ncols = n * ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((ci * k + ky) * k + kx) * ncols;
        for (std::size_t b = 0; b < n; ++b) {
          T* img = dst + (b * c + ci) * h * w;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            const T* srcrow = row + (b * ho + oy) * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              img[iy * static_cast<long>(w) + ix] += srcrow[ox];
            }
          }
        }
      }
    }
  }
}

// (N, C, S) <-> (C, N*S) channel-major rearrangements used around the GEMMs.
template <class T>
void batch_to_channel_major(const T* src, std::size_t n, std::size_t c, std::size_t s, T* dst) {
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ci = 0; ci < c; ++ci)
      std::copy_n(src + (b * c + ci) * s, s, dst + ci * n * s + b * s);
}

template <class T>
void channel_major_to_batch(const T* src, std::size_t n, std::size_t c, std::size_t s, T* dst) {
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ci = 0; ci < c; ++ci)
      std::copy_n(src + ci * n * s + b * s, s, dst + (b * c + ci) * s);
}

// Deconvolution weights stored (out, in, k, k) viewed as the (out*k*k, in) matrix.
template <class T>
MatR<T> deconv_weight_matrix(const BasicLayer<T>& layer) {
  const auto& g = layer.geom;
  const std::size_t kk = g.kernel * g.kernel;
  MatR<T> a(g.out_channels * kk, g.in_channels);
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t ci = 0; ci < g.in_channels; ++ci)
      for (std::size_t q = 0; q < kk; ++q) a(co * kk + q, ci) = layer.weight.data[(co * g.in_channels + ci) * kk + q];
  return a;
}

template <class T>
BasicTensor<T> pre_activation(const BasicLayer<T>& layer, const BasicTensor<T>& input) {
  const Geometry& g = layer.geom;
  const std::size_t n = input.batch();
  Shape out_shape{n};
  out_shape.insert(out_shape.end(), g.out_shape.begin(), g.out_shape.end());
  BasicTensor<T> out(out_shape);
  if (n == 0) return out;

  switch (g.kind) {
    case LayerKind::Linear: {
      CMapR<T> x(input.data.data(), n, g.in_channels);
      CMapR<T> wt(layer.weight.data.data(), g.out_channels, g.in_channels);
      MapR<T> y(out.data.data(), n, g.out_channels);
      y.noalias() = x * wt.transpose();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < g.out_channels; ++o) y(b, o) += layer.bias.data[o];
      break;
    }
    case LayerKind::Conv2d: {
      const std::size_t c = g.in_shape[0], h = g.in_shape[1], w = g.in_shape[2];
      const std::size_t ho = g.out_shape[1], wo = g.out_shape[2], s = ho * wo;
      const std::size_t rows = c * g.kernel * g.kernel;
      std::vector<T> cols(rows * n * s);
      im2col(input.data.data(), n, c, h, w, g.kernel, g.stride, g.padding, ho, wo, cols.data());
      MatR<T> res = CMapR<T>(layer.weight.data.data(), g.out_channels, rows) * CMapR<T>(cols.data(), rows, n * s);
      channel_major_to_batch(res.data(), n, g.out_channels, s, out.data.data());
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t co = 0; co < g.out_channels; ++co) {
          T* p = out.data.data() + (b * g.out_channels + co) * s;
          for (std::size_t j = 0; j < s; ++j) p[j] += layer.bias.data[co];
        }
      break;
    }
    case LayerKind::Deconv2d: {
      const std::size_t ci = g.in_channels, hi = g.in_shape[1], wi = g.in_shape[2];
      const std::size_t co = g.out_channels, ho = g.out_shape[1], wo = g.out_shape[2];
      const std::size_t si = hi * wi;
      std::vector<T> xm(ci * n * si);
      batch_to_channel_major(input.data.data(), n, ci, si, xm.data());
      MatR<T> cols = deconv_weight_matrix(layer) * CMapR<T>(xm.data(), ci, n * si);
      col2im(cols.data(), n, co, ho, wo, g.kernel, g.stride, g.padding, hi, wi, out.data.data());
      const std::size_t so = ho * wo;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < co; ++o) {
          T* p = out.data.data() + (b * co + o) * so;
          for (std::size_t j = 0; j < so; ++j) p[j] += layer.bias.data[o];
        }
      break;
    }
  }
  return out;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Linear: return "linear";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Deconv2d: return "deconv2d";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::None: return "none";
    case Activation::ReLU: return "relu";
    case Activation::ELU: return "elu";
    case Activation::LeakyReLU: return "leaky_relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  for (LayerKind k : {LayerKind::Linear, LayerKind::Conv2d, LayerKind::Deconv2d})
    if (to_string(k) == s) return k;
  throw FormatError("unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  for (Activation a : {Activation::None, Activation::ReLU, Activation::ELU, Activation::LeakyReLU,
                       Activation::Sigmoid, Activation::Tanh})
    if (to_string(a) == s) return a;
  throw FormatError("unknown activation '" + s + "'");
}

Shape Geometry::weight_shape() const {
  if (kind == LayerKind::Linear) return {out_channels, in_channels};
  return {out_channels, in_channels, kernel, kernel};
}

std::size_t Geometry::fan_in() const {
  return kind == LayerKind::Linear ? in_channels : in_channels * kernel * kernel;
}

std::size_t Geometry::fan_out() const {
  return kind == LayerKind::Linear ? out_channels : out_channels * kernel * kernel;
}

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (in + 2 * padding < kernel || stride == 0) {
    throw ShapeError("convolution kernel " + std::to_string(kernel) + " does not fit input " +
                     std::to_string(in) + " with padding " + std::to_string(padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

std::size_t deconv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                               std::size_t output_padding) {
  const long size = (static_cast<long>(in) - 1) * static_cast<long>(stride) - 2 * static_cast<long>(padding) +
                    static_cast<long>(kernel) + static_cast<long>(output_padding);
  if (in == 0 || size <= 0 || output_padding >= std::max<std::size_t>(stride, 1)) {
    throw ShapeError("invalid transposed convolution geometry for input " + std::to_string(in));
  }
  return static_cast<std::size_t>(size);
}

Geometry linear_geometry(std::size_t in_features, std::size_t out_features) {
  if (in_features == 0 || out_features == 0) throw ShapeError("linear layer needs positive feature counts");
  Geometry g;
  g.kind = LayerKind::Linear;
  g.in_channels = in_features;
  g.out_channels = out_features;
  g.in_shape = {in_features};
  g.out_shape = {out_features};
  return g;
}

Geometry conv_geometry(const Shape& in_chw, std::size_t out_channels, std::size_t kernel) {
  return conv_geometry(in_chw, out_channels, kernel, 2, kernel / 2);
}

Geometry conv_geometry(const Shape& in_chw, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                       std::size_t padding) {
  if (in_chw.size() != 3) throw ShapeError("convolution input must be C x H x W, got " + shape_string(in_chw));
  if (kernel == 0 || out_channels == 0) throw ShapeError("convolution needs positive kernel and channels");
  Geometry g;
  g.kind = LayerKind::Conv2d;
  g.in_shape = in_chw;
  g.in_channels = in_chw[0];
  g.out_channels = out_channels;
  g.kernel = kernel;
  g.stride = stride;
  g.padding = padding;
  g.out_shape = {out_channels, conv_output_size(in_chw[1], kernel, stride, padding),
                 conv_output_size(in_chw[2], kernel, stride, padding)};
  return g;
}

Geometry deconv_geometry(const Shape& in_chw, std::size_t out_channels, std::size_t kernel) {
  if (kernel < 2) throw ShapeError("doubling transposed convolution needs kernel >= 2");
  const std::size_t pad = (kernel - 1) / 2;
  return deconv_geometry(in_chw, out_channels, kernel, 2, pad, 2 + 2 * pad - kernel);
}

Geometry deconv_geometry(const Shape& in_chw, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                         std::size_t padding, std::size_t output_padding) {
  if (in_chw.size() != 3) throw ShapeError("deconvolution input must be C x H x W, got " + shape_string(in_chw));
  if (kernel == 0 || out_channels == 0) throw ShapeError("deconvolution needs positive kernel and channels");
  Geometry g;
  g.kind = LayerKind::Deconv2d;
  g.in_shape = in_chw;
  g.in_channels = in_chw[0];
  g.out_channels = out_channels;
  g.kernel = kernel;
  g.stride = stride;
  g.padding = padding;
  g.output_padding = output_padding;
  g.out_shape = {out_channels, deconv_output_size(in_chw[1], kernel, stride, padding, output_padding),
                 deconv_output_size(in_chw[2], kernel, stride, padding, output_padding)};
  return g;
}

template <class T>
BasicLayer<T>::BasicLayer(Geometry g, Activation act, std::size_t idx)
    : geom(std::move(g)), activation(act), weight(geom.weight_shape()), bias(geom.bias_shape()), index(idx) {}

template <class T>
void initialize(BasicLayer<T>& layer, Rng& rng) {
  const double fan_in = static_cast<double>(layer.geom.fan_in());
  const double fan_out = static_cast<double>(layer.geom.fan_out());
  const double bound = relu_family(layer.activation) ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& w : layer.weight.data) w = static_cast<T>(dist(rng));
  std::fill(layer.bias.data.begin(), layer.bias.data.end(), T(0));
}

template <class T>
T activate(Activation act, T x) {
  switch (act) {
    case Activation::None: return x;
    case Activation::ReLU: return x > T(0) ? x : T(0);
    case Activation::ELU: return x > T(0) ? x : std::expm1(x);
    case Activation::LeakyReLU: return x > T(0) ? x : T(kLeakyReluSlope) * x;
    case Activation::Sigmoid: return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

template <class T>
BasicTensor<T> layer_forward(const BasicLayer<T>& layer, const BasicTensor<T>& input, LayerCache<T>* cache) {
  check_input(layer, input);
  BasicTensor<T> pre = pre_activation(layer, input);
  BasicTensor<T> out = pre;
  for (T& v : out.data) v = activate(layer.activation, v);
  if (cache) {
    cache->input = input;
    cache->pre_activation = std::move(pre);
    cache->output = out;
  }
  return out;
}

template <class T>
LayerGrads<T> layer_backward(const BasicLayer<T>& layer, const LayerCache<T>& cache, const BasicTensor<T>& upstream,
                             bool need_input_grad) {
  const Geometry& g = layer.geom;
  const BasicTensor<T>& input = cache.input;
  check_input(layer, input);
  if (upstream.shape != cache.output.shape) {
    throw ShapeError(layer_label(g.kind, layer.index) + ": upstream gradient shape " + shape_string(upstream.shape) +
                     " does not match output shape " + shape_string(cache.output.shape));
  }
  const std::size_t n = input.batch();

  BasicTensor<T> dpre = upstream;
  for (std::size_t i = 0; i < dpre.size(); ++i)
    dpre.data[i] *= activation_grad(layer.activation, cache.pre_activation.data[i], cache.output.data[i]);

  LayerGrads<T> grads;
  grads.weight = BasicTensor<T>(g.weight_shape());
  grads.bias = BasicTensor<T>(g.bias_shape());
  if (need_input_grad) grads.input = BasicTensor<T>(input.shape);
  if (n == 0) return grads;

  switch (g.kind) {
    case LayerKind::Linear: {
      CMapR<T> x(input.data.data(), n, g.in_channels);
      CMapR<T> dy(dpre.data.data(), n, g.out_channels);
      MapR<T>(grads.weight.data.data(), g.out_channels, g.in_channels).noalias() = dy.transpose() * x;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < g.out_channels; ++o) grads.bias.data[o] += dy(b, o);
      if (need_input_grad) {
        CMapR<T> wt(layer.weight.data.data(), g.out_channels, g.in_channels);
        MapR<T>(grads.input.data.data(), n, g.in_channels).noalias() = dy * wt;
      }
      break;
    }
    case LayerKind::Conv2d: {
      const std::size_t c = g.in_shape[0], h = g.in_shape[1], w = g.in_shape[2];
      const std::size_t ho = g.out_shape[1], wo = g.out_shape[2], s = ho * wo;
      const std::size_t rows = c * g.kernel * g.kernel;
      std::vector<T> cols(rows * n * s);
      im2col(input.data.data(), n, c, h, w, g.kernel, g.stride, g.padding, ho, wo, cols.data());
      std::vector<T> gm(g.out_channels * n * s);
      batch_to_channel_major(dpre.data.data(), n, g.out_channels, s, gm.data());
      CMapR<T> gmat(gm.data(), g.out_channels, n * s);
      CMapR<T> cmat(cols.data(), rows, n * s);
      MapR<T>(grads.weight.data.data(), g.out_channels, rows).noalias() = gmat * cmat.transpose();
      for (std::size_t co = 0; co < g.out_channels; ++co) grads.bias.data[co] = gmat.row(co).sum();
      if (need_input_grad) {
        MatR<T> dcols = CMapR<T>(layer.weight.data.data(), g.out_channels, rows).transpose() * gmat;
        col2im(dcols.data(), n, c, h, w, g.kernel, g.stride, g.padding, ho, wo, grads.input.data.data());
      }
      break;
    }
    case LayerKind::Deconv2d: {
      const std::size_t ci = g.in_channels, hi = g.in_shape[1], wi = g.in_shape[2];
      const std::size_t co = g.out_channels, ho = g.out_shape[1], wo = g.out_shape[2];
      const std::size_t si = hi * wi, kk = g.kernel * g.kernel;
      std::vector<T> dcols(co * kk * n * si);
      im2col(dpre.data.data(), n, co, ho, wo, g.kernel, g.stride, g.padding, hi, wi, dcols.data());
      std::vector<T> xm(ci * n * si);
      batch_to_channel_major(input.data.data(), n, ci, si, xm.data());
      CMapR<T> dc(dcols.data(), co * kk, n * si);
      MatR<T> da = dc * CMapR<T>(xm.data(), ci, n * si).transpose();
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t q = 0; q < kk; ++q) grads.weight.data[(o * ci + i) * kk + q] = da(o * kk + q, i);
      const std::size_t so = ho * wo;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < co; ++o) {
          const T* p = dpre.data.data() + (b * co + o) * so;
          T acc = 0;
          for (std::size_t j = 0; j < so; ++j) acc += p[j];
          grads.bias.data[o] += acc;
        }
      if (need_input_grad) {
        MatR<T> dx = deconv_weight_matrix(layer).transpose() * dc;
        channel_major_to_batch(dx.data(), n, ci, si, grads.input.data.data());
      }
      break;
    }
  }
  return grads;
}

template <class T>
LayerGrads<T> layer_backward(const BasicLayer<T>& layer, const BasicTensor<T>& input, const BasicTensor<T>& upstream) {
  LayerCache<T> cache;
  layer_forward(layer, input, &cache);
  return layer_backward(layer, cache, upstream, true);
}

#define COEGAN_INSTANTIATE_LAYER(T)                                                                         \
  template struct BasicLayer<T>;                                                                            \
  template void initialize<T>(BasicLayer<T>&, Rng&);                                                        \
  template T activate<T>(Activation, T);                                                                    \
  template BasicTensor<T> layer_forward<T>(const BasicLayer<T>&, const BasicTensor<T>&, LayerCache<T>*);    \
  template LayerGrads<T> layer_backward<T>(const BasicLayer<T>&, const LayerCache<T>&, const BasicTensor<T>&, \
                                           bool);                                                           \
  template LayerGrads<T> layer_backward<T>(const BasicLayer<T>&, const BasicTensor<T>&, const BasicTensor<T>&);

COEGAN_INSTANTIATE_LAYER(float)
COEGAN_INSTANTIATE_LAYER(double)

#undef COEGAN_INSTANTIATE_LAYER

}  // namespace coegan
