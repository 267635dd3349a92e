#include "xstft/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "xstft/rng.hpp"

namespace xstft {

Variant variant_from_string(const std::string& s) {
  if (s == "st") return Variant::kSt;
  if (s == "s") return Variant::kS;
  if (s == "t") return Variant::kT;
  throw Error("unknown variant: " + s + " (expected st, s or t)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSt: return "st";
    case Variant::kS: return "s";
    case Variant::kT: return "t";
  }
  return "?";
}

BlockKind block_kind_of(Variant v) {
  switch (v) {
    case Variant::kSt: return BlockKind::kStStft;
    case Variant::kS: return BlockKind::kSStft;
    case Variant::kT: return BlockKind::kTStft;
  }
  return BlockKind::kTStft;
}

namespace {

// Classic nine-module backbone widths:
// (pointwise, reduce1, out1, reduce2, out2, pool projection)
struct ModuleRow {
  const char* name;
  int64_t p0, r1, f1, r2, f2, proj;
};
constexpr ModuleRow kModuleTable[] = {
    {"mixed3b", 64, 96, 128, 16, 32, 32},   {"mixed3c", 128, 128, 192, 32, 96, 64},
    {"mixed4b", 192, 96, 208, 16, 48, 64},  {"mixed4c", 160, 112, 224, 24, 64, 64},
    {"mixed4d", 128, 128, 256, 24, 64, 64}, {"mixed4e", 112, 144, 288, 32, 64, 64},
    {"mixed4f", 256, 160, 320, 32, 128, 128}, {"mixed5b", 256, 160, 320, 32, 128, 128},
    {"mixed5c", 384, 192, 384, 48, 128, 128},
};

// Per-variant bottleneck scaling. The multipliers roughly equalize the
// per-position cost of the three transform stages (2x, 8x and 26x channel
// expansion), which is what makes the three variants land on comparable
// FLOP budgets with very different parameter totals.
double beta_of(Variant v) {
  switch (v) {
    case Variant::kSt: return 0.4;
    case Variant::kS: return 1.125;
    case Variant::kT: return 3.0;
  }
  return 1.0;
}

std::pair<int64_t, int64_t> stem_bottlenecks(Variant v) {
  switch (v) {
    case Variant::kSt: return {8, 24};
    case Variant::kS: return {24, 64};
    case Variant::kT: return {96, 256};
  }
  return {1, 1};
}

int64_t scale_width(int64_t w, double mult, int64_t floor_width) {
  return std::max<int64_t>(floor_width, std::llround(static_cast<double>(w) * mult));
}

BlockSpec block_spec_for(const NetworkSpec& net, int64_t in_c, int64_t b, int64_t f, Stride3 stride) {
  BlockSpec bs;
  bs.kind = block_kind_of(net.variant);
  bs.in_channels = in_c;
  bs.bottleneck = b;
  bs.out_channels = f;
  bs.window = {net.window, net.window, net.window};
  bs.activation = net.activation;
  bs.act_slope = net.act_slope;
  bs.stride = stride;
  bs.ablate_temporal = net.ablate_temporal && net.variant == Variant::kT;
  return bs;
}

}  // namespace

NetworkSpec full_scale_spec(Variant v, int64_t classes, int64_t frames, int64_t height, int64_t width) {
  NetworkSpec spec;
  spec.variant = v;
  spec.num_classes = classes;
  spec.frames = frames;
  spec.height = height;
  spec.width = width;
  const auto [b1, b2] = stem_bottlenecks(v);
  spec.stem1 = {b1, 64, Stride3{1, 2, 2}};
  spec.stem2 = {b2, 192, Stride3{1, 1, 1}};
  spec.pool_a = {{1, 3, 3}, Stride3{1, 2, 2}};
  spec.pool_b = {{1, 3, 3}, Stride3{1, 2, 2}};
  const double beta = beta_of(v);
  for (const auto& row : kModuleTable) {
    ModuleSpec m;
    m.name = row.name;
    m.pointwise_out = row.p0;
    m.b1 = std::max<int64_t>(1, std::llround(beta * static_cast<double>(row.r1)));
    m.f1 = row.f1;
    m.b2 = std::max<int64_t>(1, std::llround(beta * static_cast<double>(row.r2)));
    m.f2 = row.f2;
    m.pool_proj = row.proj;
    if (std::string(row.name) == "mixed3c") m.pool_after = PoolSpec{{3, 3, 3}, Stride3{2, 2, 2}};
    if (std::string(row.name) == "mixed4f") m.pool_after = PoolSpec{{2, 2, 2}, Stride3{2, 2, 2}};
    spec.modules.push_back(std::move(m));
  }
  return spec;
}

NetworkSpec micro_spec(Variant v, int64_t classes, int64_t frames, int64_t height, int64_t width,
                       double width_multiplier, bool ablate_temporal) {
  NetworkSpec spec;
  spec.variant = v;
  spec.num_classes = classes;
  spec.frames = frames;
  spec.height = height;
  spec.width = width;
  spec.width_multiplier = width_multiplier;
  spec.ablate_temporal = ablate_temporal;
  const double m = width_multiplier;
  spec.stem1 = {scale_width(32, m, 8), scale_width(64, m, 8), Stride3{1, 2, 2}};
  spec.stem2 = {scale_width(96, m, 8), scale_width(192, m, 8), Stride3{1, 1, 1}};
  // Spatial-only pooling: the temporal extent survives to the head, so the
  // only path from frame order to the logits runs through the temporal
  // transform stage.
  spec.pool_a = {{1, 3, 3}, Stride3{1, 2, 2}};
  spec.pool_b = {{1, 3, 3}, Stride3{1, 2, 2}};
  for (int i = 0; i < 2; ++i) {
    const auto& row = kModuleTable[i];
    ModuleSpec mod;
    mod.name = row.name;
    mod.pointwise_out = scale_width(row.p0, m, 8);
    mod.b1 = scale_width(row.r1, m, 8);
    mod.f1 = scale_width(row.f1, m, 8);
    mod.b2 = scale_width(row.r2, m, 8);
    mod.f2 = scale_width(row.f2, m, 8);
    mod.pool_proj = scale_width(row.proj, m, 8);
    spec.modules.push_back(std::move(mod));
  }
  return spec;
}

template <class S>
Network<S> build_network(const NetworkSpec& spec) {
  XSTFT_CHECK(!spec.modules.empty(), "network needs at least one inception module");
  Network<S> net;
  net.spec = spec;
  net.body = std::make_unique<Sequential<S>>();
  auto& seq = *net.body;

  seq.add("stem1", build_block<S>(block_spec_for(spec, spec.in_channels, spec.stem1.bottleneck,
                                                 spec.stem1.out_channels, spec.stem1.stride)));
  seq.add("pool_a", std::make_unique<MaxPool3d<S>>(spec.pool_a.window, spec.pool_a.stride));
  seq.add("stem2", build_block<S>(block_spec_for(spec, spec.stem1.out_channels, spec.stem2.bottleneck,
                                                 spec.stem2.out_channels, spec.stem2.stride)));
  seq.add("pool_b", std::make_unique<MaxPool3d<S>>(spec.pool_b.window, spec.pool_b.stride));

  int64_t channels = spec.stem2.out_channels;
  for (const auto& mod : spec.modules) {
    InceptionSpec inc;
    inc.in_channels = channels;
    inc.pointwise_out = mod.pointwise_out;
    inc.branch1 = block_spec_for(spec, channels, mod.b1, mod.f1, Stride3{});
    inc.branch2 = block_spec_for(spec, channels, mod.b2, mod.f2, Stride3{});
    inc.pool_proj = mod.pool_proj;
    inc.activation = spec.activation;
    inc.act_slope = spec.act_slope;
    seq.add(mod.name, build_inception<S>(inc));
    channels = inc.out_channels();
    if (mod.pool_after)
      seq.add("pool_" + mod.name, std::make_unique<MaxPool3d<S>>(mod.pool_after->window, mod.pool_after->stride));
  }
  seq.add("gap", std::make_unique<GlobalAvgPool<S>>());
  seq.add("classifier", std::make_unique<PointwiseConv<S>>(channels, spec.num_classes, spec.classifier_bias));
  seq.add("logit_mean", std::make_unique<TemporalMean<S>>());

  // validate geometry end to end
  const Geometry out = seq.out_geometry(spec.input_geometry());
  XSTFT_CHECK(out.c == spec.num_classes && out.t == 1 && out.h == 1 && out.w == 1,
              "network geometry does not reduce to class logits");
  return net;
}

namespace {

// Thin QR via modified Gram-Schmidt with one reorthogonalization pass;
// columns of the result are orthonormal. rows >= cols required.
void orthonormal_columns(std::vector<double>& a, int64_t rows, int64_t cols) {
  for (int64_t j = 0; j < cols; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int64_t i = 0; i < j; ++i) {
        double dot = 0;
        for (int64_t r = 0; r < rows; ++r) dot += a[static_cast<size_t>(r * cols + i)] * a[static_cast<size_t>(r * cols + j)];
        for (int64_t r = 0; r < rows; ++r) a[static_cast<size_t>(r * cols + j)] -= dot * a[static_cast<size_t>(r * cols + i)];
      }
    }
    double norm = 0;
    for (int64_t r = 0; r < rows; ++r) {
      const double v = a[static_cast<size_t>(r * cols + j)];
      norm += v * v;
    }
    norm = std::sqrt(norm);
    XSTFT_CHECK(norm > 1e-12, "degenerate column during orthogonal init");
    for (int64_t r = 0; r < rows; ++r) a[static_cast<size_t>(r * cols + j)] /= norm;
  }
}

// Fills `w` (rows x cols, row-major) with an orthogonal initialization:
// orthonormal rows when rows <= cols, orthonormal columns otherwise.
template <class S>
void orthogonal_fill(Tensor<S>& w, int64_t rows, int64_t cols, Rng& rng) {
  const bool wide = rows <= cols;
  const int64_t qr_rows = wide ? cols : rows;
  const int64_t qr_cols = wide ? rows : cols;
  std::vector<double> a(static_cast<size_t>(qr_rows * qr_cols));
  for (auto& v : a) v = rng.next_gaussian();
  orthonormal_columns(a, qr_rows, qr_cols);
  S* out = w.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      out[r * cols + c] =
          static_cast<S>(wide ? a[static_cast<size_t>(c * qr_cols + r)] : a[static_cast<size_t>(r * qr_cols + c)]);
}

}  // namespace

template <class S>
void init_orthogonal(Network<S>& net, uint64_t seed) {
  constexpr uint64_t kTagInit = 0x696e6974;  // "init"
  uint64_t index = 0;
  net.visit_params([&](const ParamRef<S>& p) {
    const uint64_t this_index = index++;
    if (!p.trainable) {
      // running statistics reset to their neutral values
      if (p.name.ends_with(".running_var"))
        std::fill(p.value->values().begin(), p.value->values().end(), S(1));
      else
        std::fill(p.value->values().begin(), p.value->values().end(), S(0));
      return;
    }
    if (p.batchnorm) {
      const S fill = p.name.ends_with(".gain") ? S(1) : S(0);
      std::fill(p.value->values().begin(), p.value->values().end(), fill);
      return;
    }
    if (p.value->rank() < 2) {
      std::fill(p.value->values().begin(), p.value->values().end(), S(0));  // biases
      return;
    }
    const int64_t rows = p.value->extent(0);
    const int64_t cols = p.value->size() / rows;
    Rng rng = Rng::stream(seed, kTagInit, this_index);
    orthogonal_fill(*p.value, rows, cols, rng);
  });
}

template <class S>
void zero_grads(Network<S>& net) {
  net.visit_params([](const ParamRef<S>& p) {
    if (p.grad) std::fill(p.grad->values().begin(), p.grad->values().end(), S(0));
  });
}

template <class S>
std::vector<CheckpointEntry> snapshot_params(Network<S>& net) {
  std::vector<CheckpointEntry> entries;
  net.visit_params([&](const ParamRef<S>& p) { entries.push_back(make_entry(p.name, *p.value)); });
  return entries;
}

template <class S>
void restore_params(Network<S>& net, const std::vector<CheckpointEntry>& entries) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  size_t used = 0;
  net.visit_params([&](const ParamRef<S>& p) {
    auto it = by_name.find(p.name);
    XSTFT_CHECK(it != by_name.end(), "checkpoint is missing tensor '" + p.name + "'");
    Tensor<S> t = entry_to_tensor<S>(*it->second);
    XSTFT_CHECK(t.shape() == p.value->shape(), "checkpoint tensor '" + p.name + "' shape mismatch");
    // copy in place: raw parameter pointers held elsewhere must stay valid
    std::copy(t.values().begin(), t.values().end(), p.value->values().begin());
    ++used;
  });
  (void)used;
}

// ------------------------------------------------------- spec serialization

std::string spec_to_config_text(const NetworkSpec& spec) {
  std::ostringstream os;
  os << "variant = " << to_string(spec.variant) << '\n';
  os << "classes = " << spec.num_classes << '\n';
  os << "in_channels = " << spec.in_channels << '\n';
  os << "frames = " << spec.frames << '\n';
  os << "height = " << spec.height << '\n';
  os << "width = " << spec.width << '\n';
  os << "window = " << spec.window << '\n';
  os << "activation = " << to_string(spec.activation) << '\n';
  os << "act_slope = " << spec.act_slope << '\n';
  os << "width_multiplier = " << spec.width_multiplier << '\n';
  os << "ablate_temporal = " << (spec.ablate_temporal ? 1 : 0) << '\n';
  os << "classifier_bias = " << (spec.classifier_bias ? 1 : 0) << '\n';
  const auto stem = [&](const char* name, const StemSpec& s) {
    os << name << ".bottleneck = " << s.bottleneck << '\n';
    os << name << ".out = " << s.out_channels << '\n';
    os << name << ".stride = " << s.stride.t << 'x' << s.stride.h << 'x' << s.stride.w << '\n';
  };
  stem("stem1", spec.stem1);
  stem("stem2", spec.stem2);
  const auto pool = [&](const std::string& name, const PoolSpec& p) {
    os << name << ".window = " << p.window[0] << 'x' << p.window[1] << 'x' << p.window[2] << '\n';
    os << name << ".stride = " << p.stride.t << 'x' << p.stride.h << 'x' << p.stride.w << '\n';
  };
  pool("pool_a", spec.pool_a);
  pool("pool_b", spec.pool_b);
  os << "modules = " << spec.modules.size() << '\n';
  for (size_t i = 0; i < spec.modules.size(); ++i) {
    const auto& m = spec.modules[i];
    const std::string key = "module" + std::to_string(i);
    os << key << ".name = " << m.name << '\n';
    os << key << ".pointwise = " << m.pointwise_out << '\n';
    os << key << ".b1 = " << m.b1 << '\n';
    os << key << ".f1 = " << m.f1 << '\n';
    os << key << ".b2 = " << m.b2 << '\n';
    os << key << ".f2 = " << m.f2 << '\n';
    os << key << ".pool_proj = " << m.pool_proj << '\n';
    if (m.pool_after) pool(key + ".pool_after", *m.pool_after);
  }
  return os.str();
}

namespace {

Stride3 parse_stride(const std::string& v) {
  const auto a = v.find('x');
  const auto b = v.find('x', a == std::string::npos ? a : a + 1);
  if (a == std::string::npos || b == std::string::npos)
    throw Error("bad stride value: " + v + " (expected TxHxW)");
  Stride3 s;
  s.t = std::stoll(v.substr(0, a));
  s.h = std::stoll(v.substr(a + 1, b - a - 1));
  s.w = std::stoll(v.substr(b + 1));
  return s;
}

}  // namespace

void apply_spec_overrides(NetworkSpec& spec, const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "variant") spec.variant = variant_from_string(value);
    else if (key == "classes") spec.num_classes = std::stoll(value);
    else if (key == "in_channels") spec.in_channels = std::stoll(value);
    else if (key == "frames") spec.frames = std::stoll(value);
    else if (key == "height") spec.height = std::stoll(value);
    else if (key == "width") spec.width = std::stoll(value);
    else if (key == "window") spec.window = std::stoll(value);
    else if (key == "activation") spec.activation = act_kind_from_string(value);
    else if (key == "act_slope") spec.act_slope = std::stod(value);
    else if (key == "ablate_temporal") spec.ablate_temporal = std::stoll(value) != 0;
    else if (key == "classifier_bias") spec.classifier_bias = std::stoll(value) != 0;
    else if (key == "stem1.bottleneck") spec.stem1.bottleneck = std::stoll(value);
    else if (key == "stem2.bottleneck") spec.stem2.bottleneck = std::stoll(value);
    else if (key == "stem1.stride") spec.stem1.stride = parse_stride(value);
    else if (key == "stem2.stride") spec.stem2.stride = parse_stride(value);
    else
      throw Error("unknown network spec key: " + key);
  }
}

#define XSTFT_INSTANTIATE_NETWORK(S)                                              \
  template Network<S> build_network<S>(const NetworkSpec&);                       \
  template void init_orthogonal<S>(Network<S>&, uint64_t);                        \
  template void zero_grads<S>(Network<S>&);                                       \
  template std::vector<CheckpointEntry> snapshot_params<S>(Network<S>&);          \
  template void restore_params<S>(Network<S>&, const std::vector<CheckpointEntry>&);

XSTFT_INSTANTIATE_NETWORK(float)
XSTFT_INSTANTIATE_NETWORK(double)
#undef XSTFT_INSTANTIATE_NETWORK

}  // namespace xstft
