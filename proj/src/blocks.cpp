#include "xstft/blocks.hpp"

#include <cstring>

namespace xstft {

BlockKind block_kind_from_string(const std::string& s) {
  if (s == "st_stft") return BlockKind::kStStft;
  if (s == "s_stft") return BlockKind::kSStft;
  if (s == "t_stft") return BlockKind::kTStft;
  if (s == "fact_dw_baseline") return BlockKind::kFactDwBaseline;
  if (s == "conv3d_baseline") return BlockKind::kConv3dBaseline;
  throw Error("unknown block kind: " + s);
}

std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::kStStft: return "st_stft";
    case BlockKind::kSStft: return "s_stft";
    case BlockKind::kTStft: return "t_stft";
    case BlockKind::kFactDwBaseline: return "fact_dw_baseline";
    case BlockKind::kConv3dBaseline: return "conv3d_baseline";
  }
  return "?";
}

// ------------------------------------------------------------- sequential

template <class S>
void Sequential<S>::add(std::string name, std::unique_ptr<Layer<S>> layer) {
  layers_.push_back({std::move(name), std::move(layer)});
}

template <class S>
Tensor<S> Sequential<S>::forward(const Tensor<S>& x, PassMode mode) {
  Tensor<S> cur = x;
  for (auto& e : layers_) cur = e.layer->forward(cur, mode);
  return cur;
}

template <class S>
Tensor<S> Sequential<S>::backward(const Tensor<S>& gy) {
  Tensor<S> cur = gy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = it->layer->backward(cur);
  return cur;
}

template <class S>
void Sequential<S>::visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
  for (auto& e : layers_) e.layer->visit_params(prefix.empty() ? e.name : prefix + "." + e.name, v);
}

template <class S>
Geometry Sequential<S>::out_geometry(const Geometry& in) const {
  Geometry cur = in;
  for (const auto& e : layers_) cur = e.layer->out_geometry(cur);
  return cur;
}

template <class S>
LayerCost Sequential<S>::cost(const Geometry& in) const {
  LayerCost total;
  Geometry cur = in;
  for (const auto& e : layers_) {
    const LayerCost c = e.layer->cost(cur);
    total.params += c.params;
    total.bn_params += c.bn_params;
    total.flops += c.flops;
    cur = e.layer->out_geometry(cur);
  }
  return total;
}

template <class S>
void Sequential<S>::append_structure(std::vector<std::string>& out) const {
  for (const auto& e : layers_) e.layer->append_structure(out);
}

template <class S>
Geometry Sequential<S>::enumerate(const std::string& name, const Geometry& in,
                                  const typename Layer<S>::EnumerateFn& fn) const {
  Geometry cur = in;
  for (const auto& e : layers_) cur = e.layer->enumerate(name.empty() ? e.name : name + "." + e.name, cur, fn);
  return cur;
}

// ------------------------------------------------------------------ blocks

namespace {

std::shared_ptr<const StftBasis> make_basis(int dims, int64_t n) {
  std::array<int64_t, 3> window = dims == 3 ? std::array<int64_t, 3>{n, n, n}
                                : dims == 2 ? std::array<int64_t, 3>{1, n, n}
                                            : std::array<int64_t, 3>{n, 1, 1};
  return std::make_shared<StftBasis>(build_basis(enumerate_frequencies(dims, n), window));
}

template <class S>
void add_bn_act(Sequential<S>& seq, const std::string& tag, int64_t channels, const BlockSpec& spec) {
  seq.add("bn_" + tag, std::make_unique<BatchNorm<S>>(channels));
  seq.add("act_" + tag, std::make_unique<Activation<S>>(spec.activation, spec.act_slope));
}

}  // namespace

template <class S>
std::unique_ptr<Sequential<S>> build_block(const BlockSpec& spec) {
  XSTFT_CHECK(spec.bottleneck >= 1, "bottleneck width must be >= 1");
  XSTFT_CHECK(spec.in_channels >= 1 && spec.out_channels >= 1, "channel widths must be >= 1");
  for (int64_t n : spec.window) XSTFT_CHECK(n % 2 == 1, "window extents must be odd");
  XSTFT_CHECK(!spec.ablate_temporal || spec.kind == BlockKind::kTStft,
              "temporal ablation applies to t_stft blocks only");
  const int64_t b = spec.bottleneck;
  const int64_t nt = spec.window[0], nh = spec.window[1], nw = spec.window[2];
  auto seq = std::make_unique<Sequential<S>>();
  seq->add("pw_reduce", std::make_unique<PointwiseConv<S>>(spec.in_channels, b, false));
  add_bn_act(*seq, "reduce", b, spec);

  switch (spec.kind) {
    case BlockKind::kStStft: {
      seq->add("stft", std::make_unique<StftConv<S>>(make_basis(3, nt), spec.stride));
      add_bn_act(*seq, "stft", 26 * b, spec);
      seq->add("pw_expand", std::make_unique<PointwiseConv<S>>(26 * b, spec.out_channels, false));
      break;
    }
    case BlockKind::kSStft: {
      seq->add("stft", std::make_unique<StftConv<S>>(make_basis(2, nh), Stride3{1, spec.stride.h, spec.stride.w}));
      add_bn_act(*seq, "stft", 8 * b, spec);
      seq->add("dw_temporal",
               std::make_unique<DepthwiseConv<S>>(8 * b, std::array<int64_t, 3>{nt, 1, 1},
                                                  Stride3{spec.stride.t, 1, 1}));
      add_bn_act(*seq, "dw", 8 * b, spec);
      seq->add("pw_expand", std::make_unique<PointwiseConv<S>>(8 * b, spec.out_channels, false));
      break;
    }
    case BlockKind::kTStft: {
      seq->add("dw_spatial", std::make_unique<DepthwiseConv<S>>(b, std::array<int64_t, 3>{1, nh, nw},
                                                                Stride3{1, spec.stride.h, spec.stride.w}));
      add_bn_act(*seq, "dw", b, spec);
      int64_t mid = 2 * b;
      if (spec.ablate_temporal) {
        XSTFT_CHECK(spec.stride.t == 1, "ablated temporal stage cannot stride");
        seq->add("stft_ablated", std::make_unique<IdentityLayer<S>>());
        mid = b;
      } else {
        seq->add("stft", std::make_unique<StftConv<S>>(make_basis(1, nt), Stride3{spec.stride.t, 1, 1}));
      }
      add_bn_act(*seq, "stft", mid, spec);
      seq->add("pw_expand", std::make_unique<PointwiseConv<S>>(mid, spec.out_channels, false));
      break;
    }
    case BlockKind::kFactDwBaseline: {
      seq->add("dw_spatial", std::make_unique<DepthwiseConv<S>>(b, std::array<int64_t, 3>{1, nh, nw},
                                                                Stride3{1, spec.stride.h, spec.stride.w}));
      add_bn_act(*seq, "dw_s", b, spec);
      seq->add("dw_temporal",
               std::make_unique<DepthwiseConv<S>>(b, std::array<int64_t, 3>{nt, 1, 1}, Stride3{spec.stride.t, 1, 1}));
      add_bn_act(*seq, "dw_t", b, spec);
      seq->add("pw_expand", std::make_unique<PointwiseConv<S>>(b, spec.out_channels, false));
      break;
    }
    case BlockKind::kConv3dBaseline: {
      seq->add("conv3", std::make_unique<Conv3d<S>>(b, b, spec.window, spec.stride));
      add_bn_act(*seq, "conv3", b, spec);
      seq->add("pw_expand", std::make_unique<PointwiseConv<S>>(b, spec.out_channels, false));
      break;
    }
  }
  add_bn_act(*seq, "expand", spec.out_channels, spec);
  return seq;
}

// --------------------------------------------------------------- inception

template <class S>
InceptionModule<S>::InceptionModule(const InceptionSpec& spec) : spec_(spec) {
  const auto add_branch = [&](const std::string& name, std::unique_ptr<Sequential<S>> body, int64_t channels) {
    XSTFT_CHECK(channels >= 1, "enabled branch widths must be >= 1");
    branches_.push_back({name, std::move(body)});
    branch_channels_.push_back(channels);
  };
  if (spec.pointwise_out > 0) {
    auto body = std::make_unique<Sequential<S>>();
    body->add("pw", std::make_unique<PointwiseConv<S>>(spec.in_channels, spec.pointwise_out, false));
    body->add("bn", std::make_unique<BatchNorm<S>>(spec.pointwise_out));
    body->add("act", std::make_unique<Activation<S>>(spec.activation, spec.act_slope));
    add_branch("branch0", std::move(body), spec.pointwise_out);
  }
  if (spec.branch1) {
    XSTFT_CHECK(spec.branch1->in_channels == spec.in_channels, "branch1 input width mismatch");
    add_branch("branch1", build_block<S>(*spec.branch1), spec.branch1->out_channels);
  }
  if (spec.branch2) {
    XSTFT_CHECK(spec.branch2->in_channels == spec.in_channels, "branch2 input width mismatch");
    add_branch("branch2", build_block<S>(*spec.branch2), spec.branch2->out_channels);
  }
  if (spec.pool_proj > 0) {
    auto body = std::make_unique<Sequential<S>>();
    body->add("pool", std::make_unique<MaxPool3d<S>>(std::array<int64_t, 3>{3, 3, 3}, Stride3{1, 1, 1}));
    body->add("pw", std::make_unique<PointwiseConv<S>>(spec.in_channels, spec.pool_proj, false));
    body->add("bn", std::make_unique<BatchNorm<S>>(spec.pool_proj));
    body->add("act", std::make_unique<Activation<S>>(spec.activation, spec.act_slope));
    add_branch("branch3", std::move(body), spec.pool_proj);
  }
  XSTFT_CHECK(!branches_.empty(), "inception module needs at least one branch");
}

template <class S>
Tensor<S> InceptionModule<S>::forward(const Tensor<S>& x, PassMode mode) {
  std::vector<Tensor<S>> outs;
  outs.reserve(branches_.size());
  for (auto& br : branches_) outs.push_back(br.body->forward(x, mode));
  for (size_t i = 1; i < outs.size(); ++i)
    XSTFT_CHECK_SHAPE(outs[i].extent(0) == outs[0].extent(0) && outs[i].extent(2) == outs[0].extent(2) &&
                          outs[i].extent(3) == outs[0].extent(3) && outs[i].extent(4) == outs[0].extent(4),
                      "branch output spatial shapes disagree");
  const int64_t b = outs[0].extent(0), t = outs[0].extent(2), h = outs[0].extent(3), w = outs[0].extent(4);
  int64_t c_total = 0;
  for (const auto& o : outs) c_total += o.extent(1);
  Tensor<S> y = Tensor<S>::uninitialized({b, c_total, t, h, w});
  const int64_t p = t * h * w;
  for (int64_t bi = 0; bi < b; ++bi) {
    int64_t c_off = 0;
    for (const auto& o : outs) {
      const int64_t c = o.extent(1);
      std::memcpy(y.data() + (bi * c_total + c_off) * p, o.data() + bi * c * p,
                  sizeof(S) * static_cast<size_t>(c * p));
      c_off += c;
    }
  }
  return y;
}

template <class S>
Tensor<S> InceptionModule<S>::backward(const Tensor<S>& gy) {
  const int64_t b = gy.extent(0), t = gy.extent(2), h = gy.extent(3), w = gy.extent(4);
  const int64_t p = t * h * w;
  const int64_t c_total = gy.extent(1);
  Tensor<S> gx;
  int64_t c_off = 0;
  for (size_t i = 0; i < branches_.size(); ++i) {
    const int64_t c = branch_channels_[i];
    Tensor<S> slice = Tensor<S>::uninitialized({b, c, t, h, w});
    for (int64_t bi = 0; bi < b; ++bi)
      std::memcpy(slice.data() + bi * c * p, gy.data() + (bi * c_total + c_off) * p,
                  sizeof(S) * static_cast<size_t>(c * p));
    Tensor<S> g = branches_[i].body->backward(slice);
    if (i == 0)
      gx = std::move(g);
    else
      axpy(S(1), g, gx);
    c_off += c;
  }
  XSTFT_CHECK_SHAPE(c_off == c_total, "inception gradient channel mismatch");
  return gx;
}

template <class S>
void InceptionModule<S>::visit_params(const std::string& prefix, const ParamVisitor<S>& v) {
  for (auto& br : branches_) br.body->visit_params(prefix + "." + br.name, v);
}

template <class S>
Geometry InceptionModule<S>::out_geometry(const Geometry& in) const {
  Geometry first = branches_.front().body->out_geometry(in);
  int64_t c_total = 0;
  for (size_t i = 0; i < branches_.size(); ++i) {
    Geometry g = branches_[i].body->out_geometry(in);
    XSTFT_CHECK_SHAPE(g.t == first.t && g.h == first.h && g.w == first.w,
                      "branch output spatial shapes disagree");
    c_total += g.c;
  }
  return {c_total, first.t, first.h, first.w};
}

template <class S>
LayerCost InceptionModule<S>::cost(const Geometry& in) const {
  LayerCost total;
  for (const auto& br : branches_) {
    const LayerCost c = br.body->cost(in);
    total.params += c.params;
    total.bn_params += c.bn_params;
    total.flops += c.flops;
  }
  return total;
}

template <class S>
void InceptionModule<S>::append_structure(std::vector<std::string>& out) const {
  out.push_back("inception_begin");
  for (const auto& br : branches_) {
    out.push_back("branch_begin");
    br.body->append_structure(out);
    out.push_back("branch_end");
  }
  out.push_back("inception_end");
}

template <class S>
Geometry InceptionModule<S>::enumerate(const std::string& name, const Geometry& in,
                                       const typename Layer<S>::EnumerateFn& fn) const {
  for (const auto& br : branches_) br.body->enumerate(name + "." + br.name, in, fn);
  return out_geometry(in);
}

template <class S>
std::unique_ptr<InceptionModule<S>> build_inception(const InceptionSpec& spec) {
  return std::make_unique<InceptionModule<S>>(spec);
}

#define XSTFT_INSTANTIATE_BLOCKS(S)                                         \
  template class Sequential<S>;                                             \
  template class InceptionModule<S>;                                        \
  template std::unique_ptr<Sequential<S>> build_block<S>(const BlockSpec&); \
  template std::unique_ptr<InceptionModule<S>> build_inception<S>(const InceptionSpec&);

XSTFT_INSTANTIATE_BLOCKS(float)
XSTFT_INSTANTIATE_BLOCKS(double)
#undef XSTFT_INSTANTIATE_BLOCKS

}  // namespace xstft
