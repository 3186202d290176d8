#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "coegan/errors.hpp"

namespace coegan {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor. The first dimension is the batch dimension for
// every tensor that flows through a network.
template <class T>
struct BasicTensor {
  Shape shape;
  std::vector<T> data;

  BasicTensor() = default;

  explicit BasicTensor(Shape s, T fill = T{}) : shape(std::move(s)), data(shape_size(shape), fill) {}

  BasicTensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape_size(shape) != data.size()) {
      throw ShapeError("tensor shape " + shape_string(shape) + " holds " +
                       std::to_string(shape_size(shape)) + " values, got " +
                       std::to_string(data.size()));
    }
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t batch() const noexcept { return shape.empty() ? 0 : shape[0]; }

  // Number of values per batch entry.
  std::size_t sample_size() const noexcept {
    std::size_t n = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
    return shape.empty() ? 0 : n;
  }

  Shape sample_shape() const { return shape.empty() ? Shape{} : Shape(shape.begin() + 1, shape.end()); }

  std::span<T> sample(std::size_t i) { return {data.data() + i * sample_size(), sample_size()}; }
  std::span<const T> sample(std::size_t i) const {
    return {data.data() + i * sample_size(), sample_size()};
  }

  bool all_finite() const {
    for (const T& v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <class U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;
};

using Tensor = BasicTensor<float>;

// Copies rows [first, first+count) of the batch dimension.
template <class T>
BasicTensor<T> slice_batch(const BasicTensor<T>& t, std::size_t first, std::size_t count) {
  if (first + count > t.batch()) throw ShapeError("batch slice out of range");
  Shape s = t.shape;
  s[0] = count;
  const std::size_t stride = t.sample_size();
  std::vector<T> values(t.data.begin() + first * stride, t.data.begin() + (first + count) * stride);
  return BasicTensor<T>(std::move(s), std::move(values));
}

// Concatenates two tensors along the batch dimension.
template <class T>
BasicTensor<T> concat_batch(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.sample_shape() != b.sample_shape()) {
    throw ShapeError("cannot concatenate " + shape_string(a.shape) + " with " + shape_string(b.shape));
  }
  Shape s = a.shape;
  s[0] = a.batch() + b.batch();
  std::vector<T> values;
  values.reserve(a.size() + b.size());
  values.insert(values.end(), a.data.begin(), a.data.end());
  values.insert(values.end(), b.data.begin(), b.data.end());
  return BasicTensor<T>(std::move(s), std::move(values));
}

}  // namespace coegan
