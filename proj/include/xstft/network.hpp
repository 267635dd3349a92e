#ifndef XSTFT_NETWORK_HPP_
#define XSTFT_NETWORK_HPP_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xstft/blocks.hpp"
#include "xstft/checkpoint.hpp"

namespace xstft {

enum class Variant { kSt, kS, kT };
Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);
BlockKind block_kind_of(Variant v);

struct PoolSpec {
  std::array<int64_t, 3> window{3, 3, 3};
  Stride3 stride{};
};

struct StemSpec {
  int64_t bottleneck = 1;
  int64_t out_channels = 1;
  Stride3 stride{};
};

// One inception row: branch widths after all scaling, plus an optional
// max-pool that follows the module.
struct ModuleSpec {
  std::string name;
  int64_t pointwise_out = 0;
  int64_t b1 = 0, f1 = 0;  // first transform branch: bottleneck, output
  int64_t b2 = 0, f2 = 0;  // second transform branch
  int64_t pool_proj = 0;
  std::optional<PoolSpec> pool_after;
};

struct NetworkSpec {
  Variant variant = Variant::kT;
  int64_t num_classes = 174;
  int64_t in_channels = 3;
  int64_t frames = 16, height = 112, width = 112;
  int64_t window = 3;
  ActKind activation = ActKind::kLeakyRelu;
  double act_slope = 0.01;
  double width_multiplier = 1.0;
  bool ablate_temporal = false;
  bool classifier_bias = true;
  StemSpec stem1, stem2;
  PoolSpec pool_a, pool_b;
  std::vector<ModuleSpec> modules;

  Geometry input_geometry() const { return {in_channels, frames, height, width}; }
};

// Full-scale backbone: two stem blocks and the nine-module table, with
// per-variant bottleneck widths recorded here so complexity results are
// reproducible from the spec alone.
NetworkSpec full_scale_spec(Variant v, int64_t classes = 174, int64_t frames = 16, int64_t height = 112,
                            int64_t width = 112);

// Desk-scale variant: width multiplier (default 1/8), two inception modules,
// spatial-only pooling so the temporal extent survives to the head.
NetworkSpec micro_spec(Variant v, int64_t classes = 4, int64_t frames = 16, int64_t height = 32,
                       int64_t width = 32, double width_multiplier = 0.125, bool ablate_temporal = false);

// key = value serialization of a NetworkSpec and the reverse override pass.
std::string spec_to_config_text(const NetworkSpec& spec);
void apply_spec_overrides(NetworkSpec& spec, const std::vector<std::pair<std::string, std::string>>& kv);

template <class S>
struct Network {
  NetworkSpec spec;
  std::unique_ptr<Sequential<S>> body;

  Tensor<S> forward(const Tensor<S>& x, PassMode mode) { return body->forward(x, mode); }
  Tensor<S> backward(const Tensor<S>& gy) { return body->backward(gy); }
  void visit_params(const ParamVisitor<S>& v) { body->visit_params("", v); }
  std::vector<std::string> structure() const {
    std::vector<std::string> out;
    body->append_structure(out);
    return out;
  }
};

template <class S>
Network<S> build_network(const NetworkSpec& spec);

// Orthogonal weights (QR of a seeded gaussian), zero biases, unit gains.
// Matrices wider than tall get orthonormal rows, taller ones orthonormal
// columns; depthwise filters are flattened per channel.
template <class S>
void init_orthogonal(Network<S>& net, uint64_t seed);

template <class S>
void zero_grads(Network<S>& net);

// Copies of every named tensor (values only), in stable visit order.
template <class S>
std::vector<CheckpointEntry> snapshot_params(Network<S>& net);

// Strict by-name restore; throws on unknown or missing tensors.
template <class S>
void restore_params(Network<S>& net, const std::vector<CheckpointEntry>& entries);

}  // namespace xstft

#endif  // XSTFT_NETWORK_HPP_
