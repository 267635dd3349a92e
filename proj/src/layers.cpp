#include "xstft/layers.hpp"

#include <cmath>
#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>

#include "xstft/parallel.hpp"

namespace xstft {

namespace {

constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

// Branchless sign select: the ternary form compiles to a data-dependent
// branch that mispredicts on batch-norm-scale activations.
template <class S>
struct FloatBits;
template <>
struct FloatBits<float> {
  using U = uint32_t;
  using I = int32_t;
};
template <>
struct FloatBits<double> {
  using U = uint64_t;
  using I = int64_t;
};

// x * 1 when the sign bit is clear, x * slope when set; exact in both arms.
template <class S>
inline S leaky_by_sign(S x, typename FloatBits<S>::U one_bits, typename FloatBits<S>::U slope_bits) {
  using U = typename FloatBits<S>::U;
  using I = typename FloatBits<S>::I;
  const U xb = std::bit_cast<U>(x);
  const U neg = static_cast<U>(static_cast<I>(xb) >> (sizeof(S) * 8 - 1));
  const U sel = (one_bits & ~neg) | (slope_bits & neg);
  return x * std::bit_cast<S>(sel);
}

void check_rank5(const Shape& s) { XSTFT_CHECK_SHAPE(s.size() == 5, "feature maps are [b,c,t,h,w]"); }

}  // namespace

ActKind act_kind_from_string(const std::string& s) {
  if (s == "leaky_relu") return ActKind::kLeakyRelu;
  if (s == "relu") return ActKind::kRelu;
  if (s == "selu") return ActKind::kSelu;
  if (s == "elu") return ActKind::kElu;
  throw Error("unknown activation kind: " + s);
}

std::string to_string(ActKind k) {
  switch (k) {
    case ActKind::kLeakyRelu: return "leaky_relu";
    case ActKind::kRelu: return "relu";
    case ActKind::kSelu: return "selu";
    case ActKind::kElu: return "elu";
  }
  return "?";
}

AxisPad same_pad(int64_t in, int64_t k, int64_t stride) {
  XSTFT_CHECK(stride >= 1, "stride must be >= 1");
  XSTFT_CHECK(k >= 1, "window must be >= 1");
  AxisPad p;
  p.out = (in + stride - 1) / stride;
  const int64_t total = std::max<int64_t>(0, (p.out - 1) * stride + k - in);
  p.lo = total / 2;
  p.hi = total - p.lo;
  return p;
}

// ---------------------------------------------------------------- pointwise

template <class S>
PointwiseConv<S>::PointwiseConv(int64_t in_c, int64_t out_c, bool bias)
    : in_c_(in_c),
      out_c_(out_c),
      has_bias_(bias),
      weight_({out_c, in_c}),
      weight_grad_({out_c, in_c}),
      bias_({std::max<int64_t>(out_c, 1)}),
      bias_grad_({std::max<int64_t>(out_c, 1)}) {
  XSTFT_CHECK(in_c >= 1 && out_c >= 1, "channel counts must be >= 1");
}

template <class S>
Tensor<S> PointwiseConv<S>::forward(const Tensor<S>& x, PassMode) {
  check_rank5(x.shape());
  XSTFT_CHECK_SHAPE(x.extent(1) == in_c_, "pointwise input channel mismatch");
  const int64_t b = x.extent(0), p = x.extent(2) * x.extent(3) * x.extent(4);
  Tensor<S> y = Tensor<S>::uninitialized({b, out_c_, x.extent(2), x.extent(3), x.extent(4)});
  const S* w = weight_.data();
  // Position tiles keep the input slab cache-resident across output channels.
  constexpr int64_t kTile = 2048;
  parallel_for(b, [&](int64_t b_begin, int64_t b_end) {
    for (int64_t bi = b_begin; bi < b_end; ++bi) {
      const S* xp = x.data() + bi * in_c_ * p;
      S* yp = y.data() + bi * out_c_ * p;
      for (int64_t i0 = 0; i0 < p; i0 += kTile) {
        const int64_t i1 = std::min(p, i0 + kTile);
        for (int64_t f = 0; f < out_c_; ++f) {
          S* yrow = yp + f * p;
          const S bv = has_bias_ ? bias_.data()[f] : S(0);
          {
            const S wfc = w[f * in_c_];
            const S* xrow = xp;
            for (int64_t i = i0; i < i1; ++i) yrow[i] = bv + wfc * xrow[i];
          }
          for (int64_t c = 1; c < in_c_; ++c) {
            const S wfc = w[f * in_c_ + c];
            const S* xrow = xp + c * p;
            for (int64_t i = i0; i < i1; ++i) yrow[i] += wfc * xrow[i];
          }
        }
      }
    }
  });
  cached_x_ = x;
  return y;
}

template <class S>
Tensor<S> PointwiseConv<S>::backward(const Tensor<S>& gy) {
  const Tensor<S>& x = cached_x_;
  XSTFT_CHECK_SHAPE(gy.rank() == 5 && gy.extent(1) == out_c_ && gy.extent(0) == x.extent(0),
                    "pointwise upstream gradient shape mismatch");
  const int64_t b = x.extent(0), p = x.extent(2) * x.extent(3) * x.extent(4);
  XSTFT_CHECK_SHAPE(gy.extent(2) * gy.extent(3) * gy.extent(4) == p, "pointwise gradient positions mismatch");
  Tensor<S> gx = Tensor<S>::uninitialized(x.shape());
  const S* w = weight_.data();
  S* gw = weight_grad_.data();
  constexpr int64_t kTile = 2048;
  // Split by input channel: every gw column and gx row is owned by one
  // worker, so any thread count gives identical bytes.
  parallel_for(in_c_, [&](int64_t c_begin, int64_t c_end) {
    // batch-major so each upstream-gradient block stays cache resident
    // across the channels this worker owns
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t c = c_begin; c < c_end; ++c) {
        const S* xrow = x.data() + (bi * in_c_ + c) * p;
        S* gxrow = gx.data() + (bi * in_c_ + c) * p;
        const S* gp = gy.data() + bi * out_c_ * p;
        for (int64_t i0 = 0; i0 < p; i0 += kTile) {
          const int64_t i1 = std::min(p, i0 + kTile);
          // reduction and axpy in separate loops so both vectorize
          for (int64_t f = 0; f < out_c_; ++f) {
            const S* grow = gp + f * p;
            const S wfc = w[f * in_c_ + c];
            S acc = 0;
            for (int64_t i = i0; i < i1; ++i) acc += grow[i] * xrow[i];
            gw[f * in_c_ + c] += acc;
            if (f == 0) {
              for (int64_t i = i0; i < i1; ++i) gxrow[i] = wfc * grow[i];
            } else {
              for (int64_t i = i0; i < i1; ++i) gxrow[i] += wfc * grow[i];
            }
          }
        }
      }
  });
  if (has_bias_) {
    for (int64_t f = 0; f < out_c_; ++f) {
      S acc = 0;
      for (int64_t bi = 0; bi < b; ++bi) {
        const S* grow = gy.data() + (bi * out_c_ + f) * p;
        for (int64_t i = 0; i < p; ++i) acc += grow[i];
      }
      bias_grad_.data()[f] += acc;
    }
  }
  return gx;
}

template <class S>
void PointwiseConv<S>::visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
  v({prefix + ".weight", &weight_, &weight_grad_, true, false});
  if (has_bias_) v({prefix + ".bias", &bias_, &bias_grad_, true, false});
}

template <class S>
Geometry PointwiseConv<S>::out_geometry(const Geometry& in) const {
  XSTFT_CHECK_SHAPE(in.c == in_c_, "pointwise input channel mismatch");
  return {out_c_, in.t, in.h, in.w};
}

template <class S>
LayerCost PointwiseConv<S>::cost(const Geometry& in) const {
  LayerCost c;
  c.params = static_cast<long long>(out_c_ * in_c_) + (has_bias_ ? out_c_ : 0);
  c.flops = 2LL * out_c_ * in_c_ * in.positions() + (has_bias_ ? out_c_ * in.positions() : 0);
  return c;
}

// ---------------------------------------------------------------- depthwise

template <class S>
DepthwiseConv<S>::DepthwiseConv(int64_t channels, std::array<int64_t, 3> window, Stride3 stride)
    : channels_(channels),
      window_(window),
      stride_(stride),
      weight_({channels, window[0], window[1], window[2]}),
      weight_grad_({channels, window[0], window[1], window[2]}) {
  XSTFT_CHECK(channels >= 1, "channel count must be >= 1");
  for (int64_t k : window) XSTFT_CHECK(k >= 1, "window extents must be >= 1");
  XSTFT_CHECK(stride.t >= 1 && stride.h >= 1 && stride.w >= 1, "stride must be >= 1");
}

template <class S>
Tensor<S> DepthwiseConv<S>::forward(const Tensor<S>& x, PassMode) {
  check_rank5(x.shape());
  XSTFT_CHECK_SHAPE(x.extent(1) == channels_, "depthwise channel mismatch");
  const int64_t b = x.extent(0), t = x.extent(2), h = x.extent(3), w = x.extent(4);
  const AxisPad pt = same_pad(t, window_[0], stride_.t);
  const AxisPad ph = same_pad(h, window_[1], stride_.h);
  const AxisPad pw = same_pad(w, window_[2], stride_.w);
  Tensor<S> y({b, channels_, pt.out, ph.out, pw.out});
  const int64_t kvol = window_[0] * window_[1] * window_[2];
  const int64_t out_plane = pt.out * ph.out * pw.out;
  // Tap-streaming form: one fused multiply-add sweep per kernel tap over the
  // valid output range, so the inner width loop carries no bounds checks.
  parallel_for(b * channels_, [&](int64_t begin, int64_t end) {
    for (int64_t job = begin; job < end; ++job) {
      const int64_t bi = job / channels_;
      const int64_t c = job % channels_;
      const S* xp = x.data() + (bi * channels_ + c) * t * h * w;
      const S* wp = weight_.data() + c * kvol;
      S* yp = y.data() + (bi * channels_ + c) * out_plane;
      for (int64_t kt = 0; kt < window_[0]; ++kt)
        for (int64_t kh = 0; kh < window_[1]; ++kh)
          for (int64_t kw = 0; kw < window_[2]; ++kw) {
            const S wk = wp[(kt * window_[1] + kh) * window_[2] + kw];
            // valid output range per axis: 0 <= o*stride - lo + k < extent
            const auto range = [](int64_t lo, int64_t k, int64_t stride, int64_t in, int64_t out) {
              const int64_t shift = k - lo;
              int64_t o_lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
              int64_t o_hi = std::min(out, (in - shift + stride - 1) / stride);
              return std::pair<int64_t, int64_t>(o_lo, std::max(o_lo, o_hi));
            };
            const auto [t_lo, t_hi] = range(pt.lo, kt, stride_.t, t, pt.out);
            const auto [h_lo, h_hi] = range(ph.lo, kh, stride_.h, h, ph.out);
            const auto [w_lo, w_hi] = range(pw.lo, kw, stride_.w, w, pw.out);
            for (int64_t ot = t_lo; ot < t_hi; ++ot) {
              const int64_t it = ot * stride_.t - pt.lo + kt;
              for (int64_t oh = h_lo; oh < h_hi; ++oh) {
                const int64_t ih = oh * stride_.h - ph.lo + kh;
                const S* xrow = xp + (it * h + ih) * w + (w_lo * stride_.w - pw.lo + kw);
                S* yrow = yp + (ot * ph.out + oh) * pw.out;
                if (stride_.w == 1) {
                  for (int64_t ow = w_lo; ow < w_hi; ++ow) yrow[ow] += wk * xrow[ow - w_lo];
                } else {
                  for (int64_t ow = w_lo; ow < w_hi; ++ow)
                    yrow[ow] += wk * xrow[(ow - w_lo) * stride_.w];
                }
              }
            }
          }
    }
  });
  cached_x_ = x;
  return y;
}

template <class S>
Tensor<S> DepthwiseConv<S>::backward(const Tensor<S>& gy) {
  const Tensor<S>& x = cached_x_;
  check_rank5(gy.shape());
  const int64_t b = x.extent(0), t = x.extent(2), h = x.extent(3), w = x.extent(4);
  const AxisPad pt = same_pad(t, window_[0], stride_.t);
  const AxisPad ph = same_pad(h, window_[1], stride_.h);
  const AxisPad pw = same_pad(w, window_[2], stride_.w);
  XSTFT_CHECK_SHAPE(gy.extent(0) == b && gy.extent(1) == channels_ && gy.extent(2) == pt.out &&
                        gy.extent(3) == ph.out && gy.extent(4) == pw.out,
                    "depthwise upstream gradient shape mismatch");
  Tensor<S> gx(x.shape());
  const int64_t kvol = window_[0] * window_[1] * window_[2];
  // Tap-streaming like the forward pass: per tap, a dot product feeds the
  // filter gradient and an axpy scatters into the input gradient. Channel
  // split keeps every gradient cell single-writer.
  parallel_for(channels_, [&](int64_t c_begin, int64_t c_end) {
    for (int64_t c = c_begin; c < c_end; ++c)
      for (int64_t bi = 0; bi < b; ++bi) {
        const S* xp = x.data() + (bi * channels_ + c) * t * h * w;
        const S* wp = weight_.data() + c * kvol;
        S* gwp = weight_grad_.data() + c * kvol;
        S* gxp = gx.data() + (bi * channels_ + c) * t * h * w;
        const S* gp = gy.data() + (bi * channels_ + c) * pt.out * ph.out * pw.out;
        for (int64_t kt = 0; kt < window_[0]; ++kt)
          for (int64_t kh = 0; kh < window_[1]; ++kh)
            for (int64_t kw = 0; kw < window_[2]; ++kw) {
              const int64_t ki = (kt * window_[1] + kh) * window_[2] + kw;
              const S wk = wp[ki];
              const auto range = [](int64_t lo, int64_t k, int64_t stride, int64_t in, int64_t out) {
                const int64_t shift = k - lo;
                int64_t o_lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
                int64_t o_hi = std::min(out, (in - shift + stride - 1) / stride);
                return std::pair<int64_t, int64_t>(o_lo, std::max(o_lo, o_hi));
              };
              const auto [t_lo, t_hi] = range(pt.lo, kt, stride_.t, t, pt.out);
              const auto [h_lo, h_hi] = range(ph.lo, kh, stride_.h, h, ph.out);
              const auto [w_lo, w_hi] = range(pw.lo, kw, stride_.w, w, pw.out);
              S wacc = 0;
              for (int64_t ot = t_lo; ot < t_hi; ++ot) {
                const int64_t it = ot * stride_.t - pt.lo + kt;
                for (int64_t oh = h_lo; oh < h_hi; ++oh) {
                  const int64_t ih = oh * stride_.h - ph.lo + kh;
                  const S* grow = gp + (ot * ph.out + oh) * pw.out;
                  const int64_t xbase = (it * h + ih) * w + (w_lo * stride_.w - pw.lo + kw);
                  const S* xrow = xp + xbase;
                  S* gxrow = gxp + xbase;
                  if (stride_.w == 1) {
                    for (int64_t ow = w_lo; ow < w_hi; ++ow) wacc += grow[ow] * xrow[ow - w_lo];
                    for (int64_t ow = w_lo; ow < w_hi; ++ow) gxrow[ow - w_lo] += wk * grow[ow];
                  } else {
                    for (int64_t ow = w_lo; ow < w_hi; ++ow)
                      wacc += grow[ow] * xrow[(ow - w_lo) * stride_.w];
                    for (int64_t ow = w_lo; ow < w_hi; ++ow)
                      gxrow[(ow - w_lo) * stride_.w] += wk * grow[ow];
                  }
                }
              }
              gwp[ki] += wacc;
            }
      }
  });
  return gx;
}

template <class S>
void DepthwiseConv<S>::visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
  v({prefix + ".weight", &weight_, &weight_grad_, true, false});
}

template <class S>
Geometry DepthwiseConv<S>::out_geometry(const Geometry& in) const {
  XSTFT_CHECK_SHAPE(in.c == channels_, "depthwise channel mismatch");
  return {channels_, same_pad(in.t, window_[0], stride_.t).out, same_pad(in.h, window_[1], stride_.h).out,
          same_pad(in.w, window_[2], stride_.w).out};
}

template <class S>
LayerCost DepthwiseConv<S>::cost(const Geometry& in) const {
  const Geometry out = out_geometry(in);
  LayerCost c;
  const int64_t kvol = window_[0] * window_[1] * window_[2];
  c.params = static_cast<long long>(channels_ * kvol);
  c.flops = 2LL * kvol * channels_ * out.positions();
  return c;
}

// --------------------------------------------------------------------- stft

template <class S>
StftConv<S>::StftConv(std::shared_ptr<const StftBasis> basis, Stride3 stride, bool dense_path)
    : basis_(std::move(basis)),
      plan_(make_separable_plan(basis_->freqs, basis_->n_axes)),
      stride_(stride),
      dense_path_(dense_path) {
  XSTFT_CHECK(stride.t >= 1 && stride.h >= 1 && stride.w >= 1, "stride must be >= 1");
  const auto& n = basis_->n_axes;
  XSTFT_CHECK(n[0] > 1 || stride.t == 1, "temporal stride needs a windowed temporal axis");
  XSTFT_CHECK(n[1] > 1 || stride.h == 1, "height stride needs a windowed height axis");
  XSTFT_CHECK(n[2] > 1 || stride.w == 1, "width stride needs a windowed width axis");
}

namespace {

// One complex 1D convolution along `axis` of rank-3 (t,h,w) planes with
// same-style zero padding. Null imaginary pointers stand for all-zero planes.
template <class S>
void conv1d_axis(const S* in_re, const S* in_im, const std::array<int64_t, 3>& ext, int axis,
                 const std::vector<std::array<double, 2>>& kernel, int64_t stride, S* out_re, S* out_im,
                 const std::array<int64_t, 3>& out_ext) {
  const int64_t n = static_cast<int64_t>(kernel.size());
  const AxisPad pad = same_pad(ext[static_cast<size_t>(axis)], n, stride);
  XSTFT_CHECK(pad.out == out_ext[static_cast<size_t>(axis)], "separable stage extent mismatch");
  std::vector<S> kre(static_cast<size_t>(n)), kim(static_cast<size_t>(n));
  for (int64_t d = 0; d < n; ++d) {
    kre[static_cast<size_t>(d)] = static_cast<S>(kernel[static_cast<size_t>(d)][0]);
    kim[static_cast<size_t>(d)] = static_cast<S>(kernel[static_cast<size_t>(d)][1]);
  }
  const int64_t in_stride_ax = axis == 0 ? ext[1] * ext[2] : axis == 1 ? ext[2] : 1;
  const int64_t out_stride_ax = axis == 0 ? out_ext[1] * out_ext[2] : axis == 1 ? out_ext[2] : 1;
  // Iterate the two fixed axes; `a` and `b` are their extents in input order.
  const int oa = axis == 0 ? 1 : 0;
  const int ob = axis == 2 ? 1 : 2;
  const int64_t ea = ext[static_cast<size_t>(oa)], eb = ext[static_cast<size_t>(ob)];
  const int64_t in_sa = oa == 0 ? ext[1] * ext[2] : oa == 1 ? ext[2] : 1;
  const int64_t in_sb = ob == 0 ? ext[1] * ext[2] : ob == 1 ? ext[2] : 1;
  const int64_t out_sa = oa == 0 ? out_ext[1] * out_ext[2] : oa == 1 ? out_ext[2] : 1;
  const int64_t out_sb = ob == 0 ? out_ext[1] * out_ext[2] : ob == 1 ? out_ext[2] : 1;
  const int64_t len = ext[static_cast<size_t>(axis)];
  for (int64_t ia = 0; ia < ea; ++ia)
    for (int64_t ib = 0; ib < eb; ++ib) {
      const S* base_re = in_re + ia * in_sa + ib * in_sb;
      const S* base_im = in_im ? in_im + ia * in_sa + ib * in_sb : nullptr;
      S* obase_re = out_re + ia * out_sa + ib * out_sb;
      S* obase_im = out_im ? out_im + ia * out_sa + ib * out_sb : nullptr;
      for (int64_t o = 0; o < pad.out; ++o) {
        const int64_t start = o * stride - pad.lo;
        S acc_re = 0, acc_im = 0;
        for (int64_t d = 0; d < n; ++d) {
          const int64_t idx = start + d;
          if (idx < 0 || idx >= len) continue;
          const S re = base_re[idx * in_stride_ax];
          const S im = base_im ? base_im[idx * in_stride_ax] : S(0);
          acc_re += re * kre[static_cast<size_t>(d)] - im * kim[static_cast<size_t>(d)];
          acc_im += re * kim[static_cast<size_t>(d)] + im * kre[static_cast<size_t>(d)];
        }
        obase_re[o * out_stride_ax] = acc_re;
        if (obase_im) obase_im[o * out_stride_ax] = acc_im;
      }
    }
}

}  // namespace

template <class S>
Tensor<S> StftConv<S>::forward_separable(const Tensor<S>& x) const {
  const int64_t b = x.extent(0), c = x.extent(1);
  const std::array<int64_t, 3> in_ext = {x.extent(2), x.extent(3), x.extent(4)};
  const std::array<int64_t, 3> strides = {stride_.t, stride_.h, stride_.w};
  std::array<int64_t, 3> out_ext = in_ext;
  for (int a = 0; a < 3; ++a)
    out_ext[static_cast<size_t>(a)] =
        same_pad(in_ext[static_cast<size_t>(a)], basis_->n_axes[static_cast<size_t>(a)], strides[static_cast<size_t>(a)]).out;
  const int K = basis_->freqs.K();
  Tensor<S> y = Tensor<S>::uninitialized({b, c * 2 * K, out_ext[0], out_ext[1], out_ext[2]});

  struct Plane {
    std::vector<S> re, im;
    std::array<int64_t, 3> ext;
    bool complex = false;
  };
  const int64_t in_plane = in_ext[0] * in_ext[1] * in_ext[2];
  const int64_t out_plane = out_ext[0] * out_ext[1] * out_ext[2];

  parallel_for(b * c, [&](int64_t begin, int64_t end) {
    std::vector<Plane> planes(plan_.stages.size());
    for (int64_t job = begin; job < end; ++job) {
      const int64_t bi = job / c;
      const int64_t ci = job % c;
      const S* xin = x.data() + (bi * c + ci) * in_plane;
      for (size_t si = 0; si < plan_.stages.size(); ++si) {
        const PlanStage& st = plan_.stages[si];
        const S* src_re;
        const S* src_im = nullptr;
        std::array<int64_t, 3> src_ext;
        if (st.input < 0) {
          src_re = xin;
          src_ext = in_ext;
        } else {
          const Plane& p = planes[static_cast<size_t>(st.input)];
          src_re = p.re.data();
          src_im = p.complex ? p.im.data() : nullptr;
          src_ext = p.ext;
        }
        Plane& out = planes[si];
        out.ext = src_ext;
        out.ext[static_cast<size_t>(st.axis)] =
            same_pad(src_ext[static_cast<size_t>(st.axis)], basis_->n_axes[static_cast<size_t>(st.axis)],
                     strides[static_cast<size_t>(st.axis)])
                .out;
        out.complex = st.out_complex;
        const size_t vol = static_cast<size_t>(out.ext[0] * out.ext[1] * out.ext[2]);
        out.re.assign(vol, S(0));
        if (out.complex) out.im.assign(vol, S(0));
        const auto& kern =
            basis_->factors[static_cast<size_t>(st.axis)].kernel_for_unit[static_cast<size_t>(st.unit + 1)];
        conv1d_axis<S>(src_re, src_im, src_ext, st.axis, kern, strides[static_cast<size_t>(st.axis)],
                       out.re.data(), out.complex ? out.im.data() : nullptr, out.ext);
      }
      for (int q = 0; q < K; ++q) {
        const Plane& p = planes[static_cast<size_t>(plan_.point_stage[static_cast<size_t>(q)])];
        XSTFT_CHECK(p.ext == out_ext, "separable output extent mismatch");
        S* yre = y.data() + ((bi * c + ci) * 2 * K + 2 * q) * out_plane;
        S* yim = yre + out_plane;
        std::memcpy(yre, p.re.data(), sizeof(S) * static_cast<size_t>(out_plane));
        if (p.complex)
          std::memcpy(yim, p.im.data(), sizeof(S) * static_cast<size_t>(out_plane));
        else
          std::memset(yim, 0, sizeof(S) * static_cast<size_t>(out_plane));
      }
    }
  });
  return y;
}

template <class S>
Tensor<S> StftConv<S>::forward_dense(const Tensor<S>& x) const {
  const int64_t b = x.extent(0), c = x.extent(1);
  const std::array<int64_t, 3> in_ext = {x.extent(2), x.extent(3), x.extent(4)};
  const std::array<int64_t, 3> strides = {stride_.t, stride_.h, stride_.w};
  std::array<AxisPad, 3> pads;
  for (int a = 0; a < 3; ++a)
    pads[static_cast<size_t>(a)] = same_pad(in_ext[static_cast<size_t>(a)],
                                            basis_->n_axes[static_cast<size_t>(a)], strides[static_cast<size_t>(a)]);
  const int K = basis_->freqs.K();
  const int64_t vol = basis_->window_volume();
  Tensor<S> y = Tensor<S>::uninitialized({b, c * 2 * K, pads[0].out, pads[1].out, pads[2].out});
  const double* w = basis_->W.data();
  const int64_t out_plane = pads[0].out * pads[1].out * pads[2].out;
  std::vector<S> window(static_cast<size_t>(vol));
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci) {
      const S* xp = x.data() + (bi * c + ci) * in_ext[0] * in_ext[1] * in_ext[2];
      for (int64_t ot = 0; ot < pads[0].out; ++ot)
        for (int64_t oh = 0; oh < pads[1].out; ++oh)
          for (int64_t ow = 0; ow < pads[2].out; ++ow) {
            size_t wi = 0;
            for (int64_t kt = 0; kt < basis_->n_axes[0]; ++kt)
              for (int64_t kh = 0; kh < basis_->n_axes[1]; ++kh)
                for (int64_t kw = 0; kw < basis_->n_axes[2]; ++kw, ++wi) {
                  const int64_t it = ot * strides[0] - pads[0].lo + kt;
                  const int64_t ih = oh * strides[1] - pads[1].lo + kh;
                  const int64_t iw = ow * strides[2] - pads[2].lo + kw;
                  const bool inside = it >= 0 && it < in_ext[0] && ih >= 0 && ih < in_ext[1] && iw >= 0 &&
                                      iw < in_ext[2];
                  window[wi] = inside ? xp[(it * in_ext[1] + ih) * in_ext[2] + iw] : S(0);
                }
            const int64_t opos = (ot * pads[1].out + oh) * pads[2].out + ow;
            for (int q = 0; q < 2 * K; ++q) {
              S acc = 0;
              for (int64_t i = 0; i < vol; ++i)
                acc += static_cast<S>(w[q * vol + i]) * window[static_cast<size_t>(i)];
              y.data()[((bi * c + ci) * 2 * K + q) * out_plane + opos] = acc;
            }
          }
    }
  return y;
}

template <class S>
Tensor<S> StftConv<S>::forward(const Tensor<S>& x, PassMode) {
  check_rank5(x.shape());
  cached_in_shape_ = x.shape();
  return dense_path_ ? forward_dense(x) : forward_separable(x);
}

template <class S>
Tensor<S> StftConv<S>::backward(const Tensor<S>& gy) {
  // Adjoint of the fixed linear map, accumulated with the dense W. There is
  // no weight gradient.
  XSTFT_CHECK(!cached_in_shape_.empty(), "backward before forward");
  const Shape& xs = cached_in_shape_;
  const int64_t b = xs[0], c = xs[1];
  const std::array<int64_t, 3> in_ext = {xs[2], xs[3], xs[4]};
  const std::array<int64_t, 3> strides = {stride_.t, stride_.h, stride_.w};
  std::array<AxisPad, 3> pads;
  for (int a = 0; a < 3; ++a)
    pads[static_cast<size_t>(a)] = same_pad(in_ext[static_cast<size_t>(a)],
                                            basis_->n_axes[static_cast<size_t>(a)], strides[static_cast<size_t>(a)]);
  const int K = basis_->freqs.K();
  const int64_t vol = basis_->window_volume();
  XSTFT_CHECK_SHAPE(gy.rank() == 5 && gy.extent(0) == b && gy.extent(1) == c * 2 * K &&
                        gy.extent(2) == pads[0].out && gy.extent(3) == pads[1].out && gy.extent(4) == pads[2].out,
                    "stft upstream gradient shape mismatch");
  Tensor<S> gx({b, c, in_ext[0], in_ext[1], in_ext[2]});
  const double* w = basis_->W.data();
  const int64_t out_plane = pads[0].out * pads[1].out * pads[2].out;
  const int64_t in_plane = in_ext[0] * in_ext[1] * in_ext[2];
  // One axpy sweep per (row, tap) pair over valid ranges.
  parallel_for(b * c, [&](int64_t begin, int64_t end) {
    for (int64_t job = begin; job < end; ++job) {
      const int64_t bi = job / c;
      const int64_t ci = job % c;
      S* gxp = gx.data() + (bi * c + ci) * in_plane;
      const S* gp = gy.data() + (bi * c + ci) * 2 * K * out_plane;
      for (int q = 0; q < 2 * K; ++q) {
        const S* grow_base = gp + q * out_plane;
        int64_t wi = 0;
        for (int64_t kt = 0; kt < basis_->n_axes[0]; ++kt)
          for (int64_t kh = 0; kh < basis_->n_axes[1]; ++kh)
            for (int64_t kw = 0; kw < basis_->n_axes[2]; ++kw, ++wi) {
              const S wv = static_cast<S>(w[q * vol + wi]);
              if (wv == S(0)) continue;
              const auto range = [](int64_t lo, int64_t k, int64_t stride, int64_t in, int64_t out) {
                const int64_t shift = k - lo;
                int64_t o_lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
                int64_t o_hi = std::min(out, (in - shift + stride - 1) / stride);
                return std::pair<int64_t, int64_t>(o_lo, std::max(o_lo, o_hi));
              };
              const auto [t_lo, t_hi] = range(pads[0].lo, kt, strides[0], in_ext[0], pads[0].out);
              const auto [h_lo, h_hi] = range(pads[1].lo, kh, strides[1], in_ext[1], pads[1].out);
              const auto [w_lo, w_hi] = range(pads[2].lo, kw, strides[2], in_ext[2], pads[2].out);
              for (int64_t ot = t_lo; ot < t_hi; ++ot) {
                const int64_t it = ot * strides[0] - pads[0].lo + kt;
                for (int64_t oh = h_lo; oh < h_hi; ++oh) {
                  const int64_t ih = oh * strides[1] - pads[1].lo + kh;
                  const S* grow = grow_base + (ot * pads[1].out + oh) * pads[2].out;
                  S* gxrow = gxp + (it * in_ext[1] + ih) * in_ext[2] + (w_lo * strides[2] - pads[2].lo + kw);
                  if (strides[2] == 1) {
                    for (int64_t ow = w_lo; ow < w_hi; ++ow) gxrow[ow - w_lo] += wv * grow[ow];
                  } else {
                    for (int64_t ow = w_lo; ow < w_hi; ++ow)
                      gxrow[(ow - w_lo) * strides[2]] += wv * grow[ow];
                  }
                }
              }
            }
      }
    }
  });
  return gx;
}

template <class S>
Geometry StftConv<S>::out_geometry(const Geometry& in) const {
  return {in.c * 2 * basis_->freqs.K(), same_pad(in.t, basis_->n_axes[0], stride_.t).out,
          same_pad(in.h, basis_->n_axes[1], stride_.h).out, same_pad(in.w, basis_->n_axes[2], stride_.w).out};
}

template <class S>
LayerCost StftConv<S>::cost(const Geometry& in) const {
  // Cost of the separable cascade as executed: each stage is a 1D complex
  // convolution at its own (partially strided) resolution.
  LayerCost lc;
  const std::array<int64_t, 3> in_ext = {in.t, in.h, in.w};
  const std::array<int64_t, 3> strides = {stride_.t, stride_.h, stride_.w};
  std::array<int64_t, 3> reduced = in_ext;
  std::array<bool, 3> seen = {false, false, false};
  for (const PlanStage& st : plan_.stages) {
    if (!seen[static_cast<size_t>(st.axis)]) {
      reduced[static_cast<size_t>(st.axis)] =
          same_pad(in_ext[static_cast<size_t>(st.axis)], basis_->n_axes[static_cast<size_t>(st.axis)],
                   strides[static_cast<size_t>(st.axis)])
              .out;
      seen[static_cast<size_t>(st.axis)] = true;
    }
    // Positions: already-processed axes at reduced extent, untouched ones full.
    int64_t pos = 1;
    for (int a = 0; a < 3; ++a) pos *= seen[static_cast<size_t>(a)] ? reduced[static_cast<size_t>(a)] : in_ext[static_cast<size_t>(a)];
    lc.flops += 2LL * st.macs_per_output * in.c * pos;
  }
  return lc;
}

// ------------------------------------------------------------------- conv3d

template <class S>
Conv3d<S>::Conv3d(int64_t in_c, int64_t out_c, std::array<int64_t, 3> window, Stride3 stride)
    : in_c_(in_c),
      out_c_(out_c),
      window_(window),
      stride_(stride),
      weight_({out_c, in_c, window[0], window[1], window[2]}),
      weight_grad_({out_c, in_c, window[0], window[1], window[2]}) {
  XSTFT_CHECK(in_c >= 1 && out_c >= 1, "channel counts must be >= 1");
}

template <class S>
Tensor<S> Conv3d<S>::forward(const Tensor<S>& x, PassMode) {
  check_rank5(x.shape());
  XSTFT_CHECK_SHAPE(x.extent(1) == in_c_, "conv3d channel mismatch");
  const int64_t b = x.extent(0), t = x.extent(2), h = x.extent(3), w = x.extent(4);
  const AxisPad pt = same_pad(t, window_[0], stride_.t);
  const AxisPad ph = same_pad(h, window_[1], stride_.h);
  const AxisPad pw = same_pad(w, window_[2], stride_.w);
  Tensor<S> y = Tensor<S>::uninitialized({b, out_c_, pt.out, ph.out, pw.out});
  const int64_t kvol = window_[0] * window_[1] * window_[2];
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t f = 0; f < out_c_; ++f)
      for (int64_t ot = 0; ot < pt.out; ++ot)
        for (int64_t oh = 0; oh < ph.out; ++oh)
          for (int64_t ow = 0; ow < pw.out; ++ow) {
            S acc = 0;
            for (int64_t c = 0; c < in_c_; ++c) {
              const S* xp = x.data() + (bi * in_c_ + c) * t * h * w;
              const S* wp = weight_.data() + (f * in_c_ + c) * kvol;
              for (int64_t kt = 0; kt < window_[0]; ++kt) {
                const int64_t it = ot * stride_.t - pt.lo + kt;
                if (it < 0 || it >= t) continue;
                for (int64_t kh = 0; kh < window_[1]; ++kh) {
                  const int64_t ih = oh * stride_.h - ph.lo + kh;
                  if (ih < 0 || ih >= h) continue;
                  for (int64_t kw = 0; kw < window_[2]; ++kw) {
                    const int64_t iw = ow * stride_.w - pw.lo + kw;
                    if (iw < 0 || iw >= w) continue;
                    acc += wp[(kt * window_[1] + kh) * window_[2] + kw] * xp[(it * h + ih) * w + iw];
                  }
                }
              }
            }
            y.data()[((bi * out_c_ + f) * pt.out * ph.out + ot * ph.out + oh) * pw.out + ow] = acc;
          }
  cached_x_ = x;
  return y;
}

template <class S>
Tensor<S> Conv3d<S>::backward(const Tensor<S>& gy) {
  const Tensor<S>& x = cached_x_;
  const int64_t b = x.extent(0), t = x.extent(2), h = x.extent(3), w = x.extent(4);
  const AxisPad pt = same_pad(t, window_[0], stride_.t);
  const AxisPad ph = same_pad(h, window_[1], stride_.h);
  const AxisPad pw = same_pad(w, window_[2], stride_.w);
  XSTFT_CHECK_SHAPE(gy.rank() == 5 && gy.extent(0) == b && gy.extent(1) == out_c_ && gy.extent(2) == pt.out &&
                        gy.extent(3) == ph.out && gy.extent(4) == pw.out,
                    "conv3d upstream gradient shape mismatch");
  Tensor<S> gx(x.shape());
  const int64_t kvol = window_[0] * window_[1] * window_[2];
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t f = 0; f < out_c_; ++f)
      for (int64_t ot = 0; ot < pt.out; ++ot)
        for (int64_t oh = 0; oh < ph.out; ++oh)
          for (int64_t ow = 0; ow < pw.out; ++ow) {
            const S g = gy.data()[((bi * out_c_ + f) * pt.out * ph.out + ot * ph.out + oh) * pw.out + ow];
            for (int64_t c = 0; c < in_c_; ++c) {
              const S* xp = x.data() + (bi * in_c_ + c) * t * h * w;
              const S* wp = weight_.data() + (f * in_c_ + c) * kvol;
              S* gwp = weight_grad_.data() + (f * in_c_ + c) * kvol;
              S* gxp = gx.data() + (bi * in_c_ + c) * t * h * w;
              for (int64_t kt = 0; kt < window_[0]; ++kt) {
                const int64_t it = ot * stride_.t - pt.lo + kt;
                if (it < 0 || it >= t) continue;
                for (int64_t kh = 0; kh < window_[1]; ++kh) {
                  const int64_t ih = oh * stride_.h - ph.lo + kh;
                  if (ih < 0 || ih >= h) continue;
                  for (int64_t kw = 0; kw < window_[2]; ++kw) {
                    const int64_t iw = ow * stride_.w - pw.lo + kw;
                    if (iw < 0 || iw >= w) continue;
                    const int64_t ki = (kt * window_[1] + kh) * window_[2] + kw;
                    const int64_t xi = (it * h + ih) * w + iw;
                    gwp[ki] += g * xp[xi];
                    gxp[xi] += g * wp[ki];
                  }
                }
              }
            }
          }
  return gx;
}

template <class S>
void Conv3d<S>::visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
  v({prefix + ".weight", &weight_, &weight_grad_, true, false});
}

template <class S>
Geometry Conv3d<S>::out_geometry(const Geometry& in) const {
  XSTFT_CHECK_SHAPE(in.c == in_c_, "conv3d channel mismatch");
  return {out_c_, same_pad(in.t, window_[0], stride_.t).out, same_pad(in.h, window_[1], stride_.h).out,
          same_pad(in.w, window_[2], stride_.w).out};
}

template <class S>
LayerCost Conv3d<S>::cost(const Geometry& in) const {
  const Geometry out = out_geometry(in);
  LayerCost c;
  const int64_t kvol = window_[0] * window_[1] * window_[2];
  c.params = static_cast<long long>(out_c_ * in_c_ * kvol);
  c.flops = 2LL * out_c_ * in_c_ * kvol * out.positions();
  return c;
}

// ---------------------------------------------------------------- batchnorm

template <class S>
BatchNorm<S>::BatchNorm(int64_t channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gain_(Tensor<S>::full({channels}, S(1))),
      gain_grad_({channels}),
      bias_({channels}),
      bias_grad_({channels}),
      running_mean_({channels}),
      running_var_(Tensor<S>::full({channels}, S(1))),
      ready_({1}) {
  XSTFT_CHECK(channels >= 1, "channel count must be >= 1");
  XSTFT_CHECK(eps > 0, "eps must be positive");
  XSTFT_CHECK(momentum >= 0 && momentum <= 1, "momentum must be in [0,1]");
}

template <class S>
Tensor<S> BatchNorm<S>::forward(const Tensor<S>& x, PassMode mode) {
  check_rank5(x.shape());
  XSTFT_CHECK_SHAPE(x.extent(1) == channels_, "batchnorm channel mismatch");
  const int64_t b = x.extent(0), p = x.extent(2) * x.extent(3) * x.extent(4);
  const int64_t n = b * p;
  Tensor<S> y = Tensor<S>::uninitialized(x.shape());
  cached_x_ = x;
  cached_mean_.assign(static_cast<size_t>(channels_), S(0));
  cached_invstd_.assign(static_cast<size_t>(channels_), S(0));
  const bool batch_mode = mode != PassMode::kEval;
  cached_batch_mode_ = batch_mode;
  if (batch_mode) XSTFT_CHECK(n >= 2, "batch statistics need at least 2 values per channel");
  if (!batch_mode)
    XSTFT_CHECK(stats_ready(), "eval-mode batchnorm before any running-statistics update");

  parallel_for(channels_, [&](int64_t c_begin, int64_t c_end) {
    for (int64_t c = c_begin; c < c_end; ++c) {
      double mean, var;
      if (batch_mode) {
        double sum = 0, sumsq = 0;
        for (int64_t bi = 0; bi < b; ++bi) {
          const S* xp = x.data() + (bi * channels_ + c) * p;
          for (int64_t i = 0; i < p; ++i) {
            const double v = static_cast<double>(xp[i]);
            sum += v;
            sumsq += v * v;
          }
        }
        mean = sum / static_cast<double>(n);
        var = std::max(0.0, sumsq / static_cast<double>(n) - mean * mean);
        if (mode == PassMode::kTrain) {
          const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
          running_mean_.data()[c] =
              static_cast<S>((1.0 - momentum_) * static_cast<double>(running_mean_.data()[c]) + momentum_ * mean);
          running_var_.data()[c] =
              static_cast<S>((1.0 - momentum_) * static_cast<double>(running_var_.data()[c]) +
                             momentum_ * unbiased);
        }
      } else {
        mean = static_cast<double>(running_mean_.data()[c]);
        var = static_cast<double>(running_var_.data()[c]);
      }
      const S invstd = static_cast<S>(1.0 / std::sqrt(var + eps_));
      const S m = static_cast<S>(mean);
      cached_mean_[static_cast<size_t>(c)] = m;
      cached_invstd_[static_cast<size_t>(c)] = invstd;
      const S g = gain_.data()[c], be = bias_.data()[c];
      const S scale = g * invstd;
      const S shift = be - scale * m;
      for (int64_t bi = 0; bi < b; ++bi) {
        const S* xp = x.data() + (bi * channels_ + c) * p;
        S* yp = y.data() + (bi * channels_ + c) * p;
        for (int64_t i = 0; i < p; ++i) yp[i] = scale * xp[i] + shift;
      }
    }
  });
  if (mode == PassMode::kTrain) mark_stats_ready();
  return y;
}

template <class S>
Tensor<S> BatchNorm<S>::backward(const Tensor<S>& gy) {
  XSTFT_CHECK_SHAPE(gy.same_shape(cached_x_), "batchnorm upstream gradient shape mismatch");
  const int64_t b = gy.extent(0), p = gy.extent(2) * gy.extent(3) * gy.extent(4);
  const int64_t n = b * p;
  Tensor<S> gx = Tensor<S>::uninitialized(gy.shape());
  parallel_for(channels_, [&](int64_t c_begin, int64_t c_end) {
    for (int64_t c = c_begin; c < c_end; ++c) {
      const S invstd = cached_invstd_[static_cast<size_t>(c)];
      const S m = cached_mean_[static_cast<size_t>(c)];
      const S g = gain_.data()[c];
      S sum_g = 0, sum_gx = 0;
      for (int64_t bi = 0; bi < b; ++bi) {
        const S* gp = gy.data() + (bi * channels_ + c) * p;
        const S* xp = cached_x_.data() + (bi * channels_ + c) * p;
        for (int64_t i = 0; i < p; ++i) {
          sum_g += gp[i];
          sum_gx += gp[i] * (xp[i] - m) * invstd;
        }
      }
      gain_grad_.data()[c] += sum_gx;
      bias_grad_.data()[c] += sum_g;
      if (cached_batch_mode_) {
        const S mean_g = sum_g / static_cast<S>(n);
        const S mean_gx = sum_gx / static_cast<S>(n);
        for (int64_t bi = 0; bi < b; ++bi) {
          const S* gp = gy.data() + (bi * channels_ + c) * p;
          const S* xp = cached_x_.data() + (bi * channels_ + c) * p;
          S* gxp = gx.data() + (bi * channels_ + c) * p;
          for (int64_t i = 0; i < p; ++i)
            gxp[i] = g * invstd * (gp[i] - mean_g - (xp[i] - m) * invstd * mean_gx);
        }
      } else {
        for (int64_t bi = 0; bi < b; ++bi) {
          const S* gp = gy.data() + (bi * channels_ + c) * p;
          S* gxp = gx.data() + (bi * channels_ + c) * p;
          for (int64_t i = 0; i < p; ++i) gxp[i] = g * invstd * gp[i];
        }
      }
    }
  });
  return gx;
}

template <class S>
void BatchNorm<S>::visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
  v({prefix + ".gain", &gain_, &gain_grad_, true, true});
  v({prefix + ".bias", &bias_, &bias_grad_, true, true});
  v({prefix + ".running_mean", &running_mean_, nullptr, false, true});
  v({prefix + ".running_var", &running_var_, nullptr, false, true});
  v({prefix + ".stats_ready", &ready_, nullptr, false, true});
}

template <class S>
LayerCost BatchNorm<S>::cost(const Geometry& in) const {
  LayerCost c;
  c.bn_params = 2LL * channels_;
  c.flops = 2LL * channels_ * in.positions();
  return c;
}

// --------------------------------------------------------------- activation

template <class S>
Activation<S>::Activation(ActKind kind, double slope) : act_(kind), slope_(static_cast<S>(slope)) {}

template <class S>
Tensor<S> Activation<S>::forward(const Tensor<S>& x, PassMode) {
  Tensor<S> y = Tensor<S>::uninitialized(x.shape());
  const S* xp = x.data();
  S* yp = y.data();
  const int64_t n = x.size();
  cached_shape_ = x.shape();
  switch (act_) {
    case ActKind::kLeakyRelu: {
      cached_mask_.resize(static_cast<size_t>(n));
      uint8_t* mp = cached_mask_.data();
      const auto one_bits = std::bit_cast<typename FloatBits<S>::U>(S(1));
      const auto slope_bits = std::bit_cast<typename FloatBits<S>::U>(slope_);
      for (int64_t i = 0; i < n; ++i) yp[i] = leaky_by_sign<S>(xp[i], one_bits, slope_bits);
      for (int64_t i = 0; i < n; ++i) mp[i] = xp[i] > S(0);
      break;
    }
    case ActKind::kRelu: {
      cached_mask_.resize(static_cast<size_t>(n));
      uint8_t* mp = cached_mask_.data();
      for (int64_t i = 0; i < n; ++i) yp[i] = std::max(xp[i], S(0));
      for (int64_t i = 0; i < n; ++i) mp[i] = xp[i] > S(0);
      break;
    }
    case ActKind::kSelu: {
      cached_dfactor_.resize(static_cast<size_t>(n));
      S* dp = cached_dfactor_.data();
      for (int64_t i = 0; i < n; ++i) {
        if (xp[i] > S(0)) {
          yp[i] = static_cast<S>(kSeluLambda) * xp[i];
          dp[i] = static_cast<S>(kSeluLambda);
        } else {
          const S e = std::exp(xp[i]);
          yp[i] = static_cast<S>(kSeluLambda * kSeluAlpha) * (e - S(1));
          dp[i] = static_cast<S>(kSeluLambda * kSeluAlpha) * e;
        }
      }
      break;
    }
    case ActKind::kElu: {
      cached_dfactor_.resize(static_cast<size_t>(n));
      S* dp = cached_dfactor_.data();
      for (int64_t i = 0; i < n; ++i) {
        if (xp[i] > S(0)) {
          yp[i] = xp[i];
          dp[i] = S(1);
        } else {
          const S e = std::exp(xp[i]);
          yp[i] = e - S(1);
          dp[i] = e;
        }
      }
      break;
    }
  }
  return y;
}

template <class S>
Tensor<S> Activation<S>::backward(const Tensor<S>& gy) {
  XSTFT_CHECK_SHAPE(gy.shape() == cached_shape_, "activation upstream gradient shape mismatch");
  Tensor<S> gx = Tensor<S>::uninitialized(gy.shape());
  const S* gp = gy.data();
  S* gxp = gx.data();
  const int64_t n = gy.size();
  switch (act_) {
    case ActKind::kLeakyRelu: {
      // The subgradient at exactly 0 is the negative-side slope. The select
      // runs on integer bit patterns so both arms stay exact and branch-free.
      const uint8_t* mp = cached_mask_.data();
      using U = typename FloatBits<S>::U;
      const U one_bits = std::bit_cast<U>(S(1));
      const U slope_bits = std::bit_cast<U>(slope_);
      const U diff = one_bits - slope_bits;
      for (int64_t i = 0; i < n; ++i) {
        const U sel = slope_bits + diff * static_cast<U>(mp[i]);
        gxp[i] = gp[i] * std::bit_cast<S>(sel);
      }
      break;
    }
    case ActKind::kRelu: {
      const uint8_t* mp = cached_mask_.data();
      for (int64_t i = 0; i < n; ++i) gxp[i] = gp[i] * static_cast<S>(mp[i]);
      break;
    }
    case ActKind::kSelu:
    case ActKind::kElu: {
      const S* dp = cached_dfactor_.data();
      for (int64_t i = 0; i < n; ++i) gxp[i] = gp[i] * dp[i];
      break;
    }
  }
  return gx;
}

template <class S>
LayerCost Activation<S>::cost(const Geometry& in) const {
  LayerCost c;
  c.flops = static_cast<long long>(in.c * in.positions());
  return c;
}

// ------------------------------------------------------------------ pooling

template <class S>
MaxPool3d<S>::MaxPool3d(std::array<int64_t, 3> window, Stride3 stride) : window_(window), stride_(stride) {
  for (int64_t k : window) XSTFT_CHECK(k >= 1, "window extents must be >= 1");
  XSTFT_CHECK(stride.t >= 1 && stride.h >= 1 && stride.w >= 1, "stride must be >= 1");
}

template <class S>
Tensor<S> MaxPool3d<S>::forward(const Tensor<S>& x, PassMode) {
  check_rank5(x.shape());
  const int64_t b = x.extent(0), c = x.extent(1), t = x.extent(2), h = x.extent(3), w = x.extent(4);
  XSTFT_CHECK(stride_.t <= t && stride_.h <= h && stride_.w <= w, "invalid pooling geometry");
  const AxisPad pt = same_pad(t, window_[0], stride_.t);
  const AxisPad ph = same_pad(h, window_[1], stride_.h);
  const AxisPad pw = same_pad(w, window_[2], stride_.w);
  Tensor<S> y = Tensor<S>::uninitialized({b, c, pt.out, ph.out, pw.out});
  cached_in_shape_ = x.shape();
  cached_argmax_.assign(static_cast<size_t>(y.size()), 0);
  int64_t oi = 0;
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci) {
      const S* xp = x.data() + (bi * c + ci) * t * h * w;
      for (int64_t ot = 0; ot < pt.out; ++ot)
        for (int64_t oh = 0; oh < ph.out; ++oh)
          for (int64_t ow = 0; ow < pw.out; ++ow, ++oi) {
            S best = -std::numeric_limits<S>::infinity();
            int64_t best_idx = -1;
            for (int64_t kt = 0; kt < window_[0]; ++kt) {
              const int64_t it = ot * stride_.t - pt.lo + kt;
              if (it < 0 || it >= t) continue;
              for (int64_t kh = 0; kh < window_[1]; ++kh) {
                const int64_t ih = oh * stride_.h - ph.lo + kh;
                if (ih < 0 || ih >= h) continue;
                for (int64_t kw = 0; kw < window_[2]; ++kw) {
                  const int64_t iw = ow * stride_.w - pw.lo + kw;
                  if (iw < 0 || iw >= w) continue;
                  const int64_t idx = (it * h + ih) * w + iw;
                  // Ties keep the first (lowest-offset) maximum; the
                  // conditional-move form avoids data-dependent branches.
                  const bool better = xp[idx] > best;
                  best = better ? xp[idx] : best;
                  best_idx = better ? idx : best_idx;
                }
              }
            }
            XSTFT_CHECK(best_idx >= 0, "pooling window has no valid cells");
            y.data()[oi] = best;
            cached_argmax_[static_cast<size_t>(oi)] = (bi * c + ci) * t * h * w + best_idx;
          }
    }
  return y;
}

template <class S>
Tensor<S> MaxPool3d<S>::backward(const Tensor<S>& gy) {
  XSTFT_CHECK(!cached_in_shape_.empty(), "backward before forward");
  XSTFT_CHECK_SHAPE(static_cast<size_t>(gy.size()) == cached_argmax_.size(),
                    "maxpool upstream gradient shape mismatch");
  Tensor<S> gx(cached_in_shape_);
  const S* gp = gy.data();
  S* gxp = gx.data();
  for (int64_t i = 0; i < gy.size(); ++i) gxp[cached_argmax_[static_cast<size_t>(i)]] += gp[i];
  return gx;
}

template <class S>
Geometry MaxPool3d<S>::out_geometry(const Geometry& in) const {
  XSTFT_CHECK(stride_.t <= in.t && stride_.h <= in.h && stride_.w <= in.w,
              "invalid pooling geometry: stride exceeds extent");
  return {in.c, same_pad(in.t, window_[0], stride_.t).out, same_pad(in.h, window_[1], stride_.h).out,
          same_pad(in.w, window_[2], stride_.w).out};
}

template <class S>
LayerCost MaxPool3d<S>::cost(const Geometry& in) const {
  const Geometry out = out_geometry(in);
  LayerCost c;
  c.flops = static_cast<long long>((window_[0] * window_[1] * window_[2] - 1) * in.c * out.positions());
  return c;
}

template <class S>
Tensor<S> GlobalAvgPool<S>::forward(const Tensor<S>& x, PassMode) {
  check_rank5(x.shape());
  const int64_t b = x.extent(0), c = x.extent(1), t = x.extent(2), hw = x.extent(3) * x.extent(4);
  Tensor<S> y = Tensor<S>::uninitialized({b, c, t, 1, 1});
  for (int64_t i = 0; i < b * c * t; ++i) {
    const S* xp = x.data() + i * hw;
    S acc = 0;
    for (int64_t j = 0; j < hw; ++j) acc += xp[j];
    y.data()[i] = acc / static_cast<S>(hw);
  }
  cached_in_shape_ = x.shape();
  return y;
}

template <class S>
Tensor<S> GlobalAvgPool<S>::backward(const Tensor<S>& gy) {
  XSTFT_CHECK(!cached_in_shape_.empty(), "backward before forward");
  Tensor<S> gx = Tensor<S>::uninitialized(cached_in_shape_);
  const int64_t hw = cached_in_shape_[3] * cached_in_shape_[4];
  XSTFT_CHECK_SHAPE(gy.size() * hw == gx.size(), "gap upstream gradient shape mismatch");
  for (int64_t i = 0; i < gy.size(); ++i) {
    const S g = gy.data()[i] / static_cast<S>(hw);
    S* gxp = gx.data() + i * hw;
    for (int64_t j = 0; j < hw; ++j) gxp[j] = g;
  }
  return gx;
}

template <class S>
LayerCost GlobalAvgPool<S>::cost(const Geometry& in) const {
  LayerCost c;
  c.flops = static_cast<long long>(in.c * in.positions());
  return c;
}

template <class S>
Tensor<S> TemporalMean<S>::forward(const Tensor<S>& x, PassMode) {
  check_rank5(x.shape());
  XSTFT_CHECK_SHAPE(x.extent(3) == 1 && x.extent(4) == 1, "temporal mean expects spatially pooled input");
  const int64_t b = x.extent(0), c = x.extent(1), t = x.extent(2);
  Tensor<S> y = Tensor<S>::uninitialized({b, c, 1, 1, 1});
  for (int64_t i = 0; i < b * c; ++i) {
    const S* xp = x.data() + i * t;
    S acc = 0;
    for (int64_t j = 0; j < t; ++j) acc += xp[j];
    y.data()[i] = acc / static_cast<S>(t);
  }
  cached_in_shape_ = x.shape();
  return y;
}

template <class S>
Tensor<S> TemporalMean<S>::backward(const Tensor<S>& gy) {
  XSTFT_CHECK(!cached_in_shape_.empty(), "backward before forward");
  Tensor<S> gx = Tensor<S>::uninitialized(cached_in_shape_);
  const int64_t t = cached_in_shape_[2];
  XSTFT_CHECK_SHAPE(gy.size() * t == gx.size(), "temporal mean upstream gradient shape mismatch");
  for (int64_t i = 0; i < gy.size(); ++i) {
    const S g = gy.data()[i] / static_cast<S>(t);
    S* gxp = gx.data() + i * t;
    for (int64_t j = 0; j < t; ++j) gxp[j] = g;
  }
  return gx;
}

template <class S>
LayerCost TemporalMean<S>::cost(const Geometry& in) const {
  LayerCost c;
  c.flops = static_cast<long long>(in.c * in.t);
  return c;
}

#define XSTFT_INSTANTIATE_LAYERS(S) \
  template class PointwiseConv<S>;  \
  template class DepthwiseConv<S>;  \
  template class Conv3d<S>;         \
  template class StftConv<S>;       \
  template class BatchNorm<S>;      \
  template class Activation<S>;     \
  template class MaxPool3d<S>;      \
  template class GlobalAvgPool<S>;  \
  template class TemporalMean<S>;

XSTFT_INSTANTIATE_LAYERS(float)
XSTFT_INSTANTIATE_LAYERS(double)
#undef XSTFT_INSTANTIATE_LAYERS

}  // namespace xstft
