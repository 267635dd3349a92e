#ifndef XSTFT_BLOCKS_HPP_
#define XSTFT_BLOCKS_HPP_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xstft/layers.hpp"

namespace xstft {

enum class BlockKind { kStStft, kSStft, kTStft, kFactDwBaseline, kConv3dBaseline };

BlockKind block_kind_from_string(const std::string& s);
std::string to_string(BlockKind k);

// Declarative description of one bottleneck block. The per-kind internal
// structure is fixed: a pointwise reduction, the kind's covering stage(s),
// and a pointwise expansion, every stage followed by batch norm and the
// activation. Pointwise convolutions inside blocks are bias-free.
struct BlockSpec {
  BlockKind kind = BlockKind::kStStft;
  int64_t in_channels = 1;
  int64_t bottleneck = 1;
  int64_t out_channels = 1;
  std::array<int64_t, 3> window{3, 3, 3};  // (n_t, n_h, n_w)
  ActKind activation = ActKind::kLeakyRelu;
  double act_slope = 0.01;
  Stride3 stride{};
  bool ablate_temporal = false;  // t_stft only: temporal transform -> identity
};

// Ordered chain of named layers; the building block for blocks, inception
// modules and whole networks.
template <class S>
class Sequential final : public Layer<S> {
 public:
  const char* kind() const override { return "sequential"; }
  void add(std::string name, std::unique_ptr<Layer<S>> layer);
  Tensor<S> forward(const Tensor<S>& x, PassMode mode) override;
  Tensor<S> backward(const Tensor<S>& gy) override;
  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) override;
  Geometry out_geometry(const Geometry& in) const override;
  LayerCost cost(const Geometry& in) const override;
  void append_structure(std::vector<std::string>& out) const override;
  Geometry enumerate(const std::string& name, const Geometry& in,
                     const typename Layer<S>::EnumerateFn& fn) const override;

  size_t size() const { return layers_.size(); }
  Layer<S>& at(size_t i) { return *layers_[i].layer; }
  const std::string& name_at(size_t i) const { return layers_[i].name; }

 private:
  struct Entry {
    std::string name;
    std::unique_ptr<Layer<S>> layer;
  };
  std::vector<Entry> layers_;
};

template <class S>
std::unique_ptr<Sequential<S>> build_block(const BlockSpec& spec);

// Four-branch module: pointwise | block core | block core | maxpool+pointwise,
// concatenated along channels. Branches with zero width are omitted, which
// gives the degenerate single-branch forms.
struct InceptionSpec {
  int64_t in_channels = 1;
  int64_t pointwise_out = 0;
  std::optional<BlockSpec> branch1;
  std::optional<BlockSpec> branch2;
  int64_t pool_proj = 0;
  ActKind activation = ActKind::kLeakyRelu;
  double act_slope = 0.01;

  int64_t out_channels() const {
    return pointwise_out + (branch1 ? branch1->out_channels : 0) + (branch2 ? branch2->out_channels : 0) +
           pool_proj;
  }
};

template <class S>
class InceptionModule final : public Layer<S> {
 public:
  explicit InceptionModule(const InceptionSpec& spec);
  const char* kind() const override { return "inception"; }
  Tensor<S> forward(const Tensor<S>& x, PassMode mode) override;
  Tensor<S> backward(const Tensor<S>& gy) override;
  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) override;
  Geometry out_geometry(const Geometry& in) const override;
  LayerCost cost(const Geometry& in) const override;
  void append_structure(std::vector<std::string>& out) const override;
  Geometry enumerate(const std::string& name, const Geometry& in,
                     const typename Layer<S>::EnumerateFn& fn) const override;

  size_t branch_count() const { return branches_.size(); }

 private:
  struct Branch {
    std::string name;
    std::unique_ptr<Sequential<S>> body;
  };
  InceptionSpec spec_;
  std::vector<Branch> branches_;
  std::vector<int64_t> branch_channels_;
};

template <class S>
std::unique_ptr<InceptionModule<S>> build_inception(const InceptionSpec& spec);

}  // namespace xstft

#endif  // XSTFT_BLOCKS_HPP_
