#include "xstft/tensor.hpp"

namespace xstft {

namespace {

// Walks all indices of `shape`, calling fn(index_vector, linear_offset).
template <class Fn>
void for_each_index(const Shape& shape, Fn&& fn) {
  std::vector<int64_t> idx(shape.size(), 0);
  const int64_t total = shape_volume(shape);
  for (int64_t lin = 0; lin < total; ++lin) {
    fn(idx, lin);
    for (int a = static_cast<int>(shape.size()) - 1; a >= 0; --a) {
      if (++idx[static_cast<size_t>(a)] < shape[static_cast<size_t>(a)]) break;
      idx[static_cast<size_t>(a)] = 0;
    }
  }
}

}  // namespace

template <class S>
Tensor<S> zero_pad(const Tensor<S>& x, const PadSpec& pads) {
  XSTFT_CHECK_SHAPE(static_cast<int>(pads.size()) == x.rank(), "one pad pair per axis required");
  Shape out_shape(x.shape());
  for (size_t a = 0; a < pads.size(); ++a) {
    XSTFT_CHECK(pads[a].first >= 0 && pads[a].second >= 0, "pad amounts must be >= 0");
    out_shape[a] += pads[a].first + pads[a].second;
  }
  Tensor<S> out(out_shape);
  const S* src = x.data();
  S* dst = out.data();
  for_each_index(x.shape(), [&](const std::vector<int64_t>& idx, int64_t lin) {
    int64_t off = 0;
    for (int a = 0; a < x.rank(); ++a)
      off += (idx[static_cast<size_t>(a)] + pads[static_cast<size_t>(a)].first) * out.stride(a);
    dst[off] = src[lin];
  });
  return out;
}

template <class S>
Tensor<S> crop(const Tensor<S>& x, const PadSpec& pads) {
  XSTFT_CHECK_SHAPE(static_cast<int>(pads.size()) == x.rank(), "one pad pair per axis required");
  Shape out_shape(x.shape());
  for (size_t a = 0; a < pads.size(); ++a) {
    XSTFT_CHECK(pads[a].first >= 0 && pads[a].second >= 0, "crop amounts must be >= 0");
    out_shape[a] -= pads[a].first + pads[a].second;
    XSTFT_CHECK_SHAPE(out_shape[a] >= 1, "crop leaves an empty axis");
  }
  Tensor<S> out(out_shape);
  const S* src = x.data();
  S* dst = out.data();
  for_each_index(out.shape(), [&](const std::vector<int64_t>& idx, int64_t lin) {
    int64_t off = 0;
    for (int a = 0; a < x.rank(); ++a)
      off += (idx[static_cast<size_t>(a)] + pads[static_cast<size_t>(a)].first) * x.stride(a);
    dst[lin] = src[off];
  });
  return out;
}

template <class S>
std::vector<S> neighborhood_gather(const Tensor<S>& x, const std::array<int64_t, 3>& center, int64_t r) {
  XSTFT_CHECK_SHAPE(x.rank() == 3, "neighborhood_gather expects a rank-3 tensor");
  XSTFT_CHECK(r >= 0, "radius must be >= 0");
  for (int a = 0; a < 3; ++a)
    XSTFT_CHECK(center[static_cast<size_t>(a)] - r >= 0 && center[static_cast<size_t>(a)] + r < x.extent(a),
                "center with radius out of bounds");
  const int64_t n = 2 * r + 1;
  std::vector<S> out;
  out.reserve(static_cast<size_t>(n * n * n));
  const S* src = x.data();
  for (int64_t dt = -r; dt <= r; ++dt)
    for (int64_t dh = -r; dh <= r; ++dh)
      for (int64_t dw = -r; dw <= r; ++dw) {
        const int64_t off = (center[0] + dt) * x.stride(0) + (center[1] + dh) * x.stride(1) +
                            (center[2] + dw) * x.stride(2);
        out.push_back(src[off]);
      }
  return out;
}

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  XSTFT_CHECK_SHAPE(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 tensors");
  XSTFT_CHECK_SHAPE(a.extent(1) == b.extent(0), "inner extents must agree");
  const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<S> out({m, n});
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      S acc = 0;
      for (int64_t l = 0; l < k; ++l) acc += pa[i * k + l] * pb[l * n + j];
      po[i * n + j] = acc;
    }
  return out;
}

template <class S>
void axpy(S alpha, const Tensor<S>& x, Tensor<S>& y) {
  XSTFT_CHECK_SHAPE(x.same_shape(y), "axpy operands must share a shape");
  const S* px = x.data();
  S* py = y.data();
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i) py[i] += alpha * px[i];
}

template <class S>
S reduce_sum(const Tensor<S>& x) {
  S acc = 0;
  for (S v : x.values()) acc += v;
  return acc;
}

template <class S>
int64_t argmax(std::span<const S> v) {
  XSTFT_CHECK(!v.empty(), "argmax of empty span");
  int64_t best = 0;
  for (int64_t i = 1; i < static_cast<int64_t>(v.size()); ++i)
    if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
  return best;
}

#define XSTFT_INSTANTIATE(S)                                                                  \
  template Tensor<S> zero_pad<S>(const Tensor<S>&, const PadSpec&);                           \
  template Tensor<S> crop<S>(const Tensor<S>&, const PadSpec&);                               \
  template std::vector<S> neighborhood_gather<S>(const Tensor<S>&, const std::array<int64_t, 3>&, \
                                                 int64_t);                                    \
  template Tensor<S> matmul<S>(const Tensor<S>&, const Tensor<S>&);                           \
  template void axpy<S>(S, const Tensor<S>&, Tensor<S>&);                                     \
  template S reduce_sum<S>(const Tensor<S>&);                                                 \
  template int64_t argmax<S>(std::span<const S>);

XSTFT_INSTANTIATE(float)
XSTFT_INSTANTIATE(double)
#undef XSTFT_INSTANTIATE

}  // namespace xstft
