#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "resemg/errors.hpp"

namespace resemg {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_product(const Shape& shape);

/// Dense row-major array of rank 1 to 3.
///
/// Sequences use the (time, channels) convention. The library is
/// instantiated for float (training and inference) and double (the
/// finite-difference oracle). Values are immutable through the public
/// accessors except via the explicit in-place helpers used by kernels
/// and the optimizer.
template <typename Scalar>
class BasicTensor {
 public:
  using value_type = Scalar;

  BasicTensor(Shape shape, std::vector<Scalar> data);

  static BasicTensor zeros(const Shape& shape);
  static BasicTensor filled(const Shape& shape, Scalar value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const Scalar> data() const noexcept { return data_; }
  std::span<Scalar> mutable_data() noexcept { return data_; }
  const std::vector<Scalar>& values() const noexcept { return data_; }

  Scalar operator[](std::size_t flat) const noexcept { return data_[flat]; }
  Scalar& operator[](std::size_t flat) noexcept { return data_[flat]; }

  Scalar at(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }
  Scalar& at(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
  Scalar at(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// In-place `this += other`. Shapes must match exactly.
  void add_inplace(const BasicTensor& other);
  void scale_inplace(Scalar factor) noexcept;
  void fill(Scalar value) noexcept;

  /// Same data under a new shape with equal element count.
  BasicTensor reshaped(Shape shape) const;

  template <typename Other>
  BasicTensor<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return BasicTensor<Other>(shape_, std::move(out));
  }

  bool operator==(const BasicTensor& other) const = default;

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

enum class MapFn { relu, sigmoid, tanh, exp, neg };

/// Parses "relu", "sigmoid", "tanh", "exp", "neg"; anything else is a UsageError.
MapFn parse_map_fn(std::string_view tag);
std::string_view map_fn_name(MapFn fn);

template <typename Scalar>
Scalar apply_map(MapFn fn, Scalar x) noexcept;

/// out = a * b for rank-2 operands, accumulated in double.
template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b);

template <typename Scalar>
BasicTensor<Scalar> ew_add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b);

template <typename Scalar>
BasicTensor<Scalar> ew_map(const BasicTensor<Scalar>& a, MapFn fn);

/// Throws DimensionError unless both shapes are identical.
void require_same_shape(const Shape& a, const Shape& b, std::string_view what);

}  // namespace resemg
