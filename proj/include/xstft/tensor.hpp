#ifndef XSTFT_TENSOR_HPP_
#define XSTFT_TENSOR_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "xstft/common.hpp"

namespace xstft {

using Shape = std::vector<int64_t>;

inline int64_t shape_volume(const Shape& s) {
  int64_t v = 1;
  for (int64_t e : s) v *= e;
  return v;
}

// Dense row-major tensor (last axis fastest). Carries feature maps as
// [batch, channel, time, height, width]; smaller ranks are used freely by
// kernels and tests. Values are contiguous; the shape constructor zero-fills,
// `uninitialized` skips the fill for outputs that are fully overwritten.
//
// Copies share the underlying buffer: operations treat their inputs as
// immutable (layer caches rely on this), so sharing is safe and keeps the
// forward/backward paths free of redundant memcpys. clone() gives an
// independent buffer when a genuine copy is wanted.
template <class S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    allocate();
    std::fill(data_.get(), data_.get() + size_, S(0));
  }

  Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)) {
    validate_shape();
    XSTFT_CHECK_SHAPE(static_cast<int64_t>(data.size()) == shape_volume(shape_),
                      "data length does not match shape volume");
    allocate();
    std::copy(data.begin(), data.end(), data_.get());
  }

  Tensor(const Tensor& o) = default;
  Tensor& operator=(const Tensor& o) = default;
  Tensor(Tensor&&) noexcept = default;
  Tensor& operator=(Tensor&&) noexcept = default;

  static Tensor uninitialized(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.validate_shape();
    t.allocate();
    return t;
  }

  static Tensor full(Shape shape, S value) {
    Tensor t = uninitialized(std::move(shape));
    std::fill(t.data_.get(), t.data_.get() + t.size_, value);
    return t;
  }

  Tensor clone() const {
    Tensor t = uninitialized(shape_);
    std::copy(data_.get(), data_.get() + size_, t.data_.get());
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  int64_t size() const { return size_; }
  int64_t stride(int axis) const { return strides_[static_cast<size_t>(axis)]; }

  S* data() { return data_.get(); }
  const S* data() const { return data_.get(); }
  std::span<S> values() { return {data_.get(), static_cast<size_t>(size_)}; }
  std::span<const S> values() const { return {data_.get(), static_cast<size_t>(size_)}; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  int64_t offset_of(std::span<const int64_t> idx) const {
    XSTFT_CHECK_SHAPE(static_cast<int>(idx.size()) == rank(), "index rank mismatch");
    int64_t off = 0;
    for (int a = 0; a < rank(); ++a) {
      XSTFT_CHECK(idx[static_cast<size_t>(a)] >= 0 && idx[static_cast<size_t>(a)] < extent(a),
                  "index out of range");
      off += idx[static_cast<size_t>(a)] * stride(a);
    }
    return off;
  }

  S& at(std::initializer_list<int64_t> idx) {
    return data_[static_cast<size_t>(offset_of(std::span<const int64_t>(idx.begin(), idx.size())))];
  }
  const S& at(std::initializer_list<int64_t> idx) const {
    return data_[static_cast<size_t>(offset_of(std::span<const int64_t>(idx.begin(), idx.size())))];
  }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out = Tensor<T>::uninitialized(shape_);
    for (int64_t i = 0; i < size_; ++i) out.data()[i] = static_cast<T>(data_[static_cast<size_t>(i)]);
    return out;
  }

 private:
  template <class T>
  friend class Tensor;

  void validate_shape() const {
    XSTFT_CHECK_SHAPE(!shape_.empty(), "rank-0 tensors are not supported");
    for (int64_t e : shape_) XSTFT_CHECK_SHAPE(e >= 1, "all extents must be >= 1");
  }

  void allocate() {
    size_ = shape_volume(shape_);
    data_ = std::shared_ptr<S[]>(new S[static_cast<size_t>(size_)]);
    strides_.assign(shape_.size(), 1);
    for (int a = static_cast<int>(shape_.size()) - 2; a >= 0; --a)
      strides_[static_cast<size_t>(a)] = strides_[static_cast<size_t>(a) + 1] * shape_[static_cast<size_t>(a) + 1];
  }

  Shape shape_;
  std::vector<int64_t> strides_;
  int64_t size_ = 0;
  std::shared_ptr<S[]> data_;
};

using PadSpec = std::vector<std::pair<int64_t, int64_t>>;  // (lo, hi) per axis

// Zero padding; output extent = extent + lo + hi per axis, new cells 0.
template <class S>
Tensor<S> zero_pad(const Tensor<S>& x, const PadSpec& pads);

// Inverse of zero_pad with the same amounts.
template <class S>
Tensor<S> crop(const Tensor<S>& x, const PadSpec& pads);

// All (2r+1)^3 values around `center` of a rank-3 tensor, offsets ordered
// time-major then height then width, each running -r..+r. The center must be
// in bounds together with its whole neighborhood (pad first if needed).
template <class S>
std::vector<S> neighborhood_gather(const Tensor<S>& x, const std::array<int64_t, 3>& center, int64_t r);

// Rank-2 matrix product with a fixed left-to-right summation order.
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);

// y += alpha * x, elementwise over identical shapes.
template <class S>
void axpy(S alpha, const Tensor<S>& x, Tensor<S>& y);

template <class S>
S reduce_sum(const Tensor<S>& x);

// Index of the first maximum element.
template <class S>
int64_t argmax(std::span<const S> v);

}  // namespace xstft

#endif  // XSTFT_TENSOR_HPP_
