#include "resemg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace resemg {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void require_same_shape(const Shape& a, const Shape& b, std::string_view what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw DimensionError("tensor rank must be 1, 2 or 3, got " + std::to_string(shape.size()));
  }
  for (auto d : shape) {
    if (d == 0) throw DimensionError("zero-size tensor " + shape_string(shape));
  }
}

}  // namespace

template <typename Scalar>
BasicTensor<Scalar>::BasicTensor(Shape shape, std::vector<Scalar> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_product(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
#ifdef RESEMG_CHECKED
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw UsageError("non-finite tensor value at flat index " + std::to_string(i));
    }
  }
#endif
}

template <typename Scalar>
BasicTensor<Scalar> BasicTensor<Scalar>::zeros(const Shape& shape) {
  return filled(shape, Scalar{0});
}

template <typename Scalar>
BasicTensor<Scalar> BasicTensor<Scalar>::filled(const Shape& shape, Scalar value) {
  validate_shape(shape);
  return BasicTensor(shape, std::vector<Scalar>(shape_product(shape), value));
}

template <typename Scalar>
void BasicTensor<Scalar>::add_inplace(const BasicTensor& other) {
  require_same_shape(shape_, other.shape_, "add_inplace");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

template <typename Scalar>
void BasicTensor<Scalar>::scale_inplace(Scalar factor) noexcept {
  for (auto& v : data_) v *= factor;
}

template <typename Scalar>
void BasicTensor<Scalar>::fill(Scalar value) noexcept {
  for (auto& v : data_) v = value;
}

template <typename Scalar>
BasicTensor<Scalar> BasicTensor<Scalar>::reshaped(Shape shape) const {
  return BasicTensor(std::move(shape), data_);
}

MapFn parse_map_fn(std::string_view tag) {
  if (tag == "relu") return MapFn::relu;
  if (tag == "sigmoid") return MapFn::sigmoid;
  if (tag == "tanh") return MapFn::tanh;
  if (tag == "exp") return MapFn::exp;
  if (tag == "neg") return MapFn::neg;
  throw UsageError("unknown elementwise function '" + std::string(tag) + "'");
}

std::string_view map_fn_name(MapFn fn) {
  switch (fn) {
    case MapFn::relu: return "relu";
    case MapFn::sigmoid: return "sigmoid";
    case MapFn::tanh: return "tanh";
    case MapFn::exp: return "exp";
    case MapFn::neg: return "neg";
  }
  return "?";
}

template <typename Scalar>
Scalar apply_map(MapFn fn, Scalar x) noexcept {
  switch (fn) {
    case MapFn::relu: return x > Scalar{0} ? x : Scalar{0};
    case MapFn::sigmoid: return Scalar{1} / (Scalar{1} + std::exp(-x));
    case MapFn::tanh: return std::tanh(x);
    case MapFn::exp: return std::exp(x);
    case MapFn::neg: return -x;
  }
  return x;
}

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> acc(n);
  std::vector<Scalar> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const Scalar* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<Scalar>(acc[j]);
  }
  return BasicTensor<Scalar>({m, n}, std::move(out));
}

template <typename Scalar>
BasicTensor<Scalar> ew_add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "ew_add");
  BasicTensor<Scalar> out = a;
  out.add_inplace(b);
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> ew_map(const BasicTensor<Scalar>& a, MapFn fn) {
  std::vector<Scalar> out(a.size());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply_map(fn, in[i]);
  return BasicTensor<Scalar>(a.shape(), std::move(out));
}

#define RESEMG_INSTANTIATE(S)                                                   \
  template class BasicTensor<S>;                                                \
  template S apply_map<S>(MapFn, S) noexcept;                                   \
  template BasicTensor<S> matmul<S>(const BasicTensor<S>&, const BasicTensor<S>&); \
  template BasicTensor<S> ew_add<S>(const BasicTensor<S>&, const BasicTensor<S>&); \
  template BasicTensor<S> ew_map<S>(const BasicTensor<S>&, MapFn);

RESEMG_INSTANTIATE(float)
RESEMG_INSTANTIATE(double)

#undef RESEMG_INSTANTIATE

}  // namespace resemg
