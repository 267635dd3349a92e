#ifndef XSTFT_LAYERS_HPP_
#define XSTFT_LAYERS_HPP_

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "xstft/stft_kernel.hpp"
#include "xstft/tensor.hpp"

namespace xstft {

// kTrain updates BN running statistics; kTrainFrozenStats normalizes with
// batch statistics but leaves the running ones untouched (pure forward, used
// by gradient checks); kEval normalizes with running statistics.
enum class PassMode { kTrain, kTrainFrozenStats, kEval };

enum class ActKind { kLeakyRelu, kRelu, kSelu, kElu };

ActKind act_kind_from_string(const std::string& s);
std::string to_string(ActKind k);

// Per-sample feature-map geometry (batch excluded).
struct Geometry {
  int64_t c = 0, t = 0, h = 0, w = 0;
  int64_t positions() const { return t * h * w; }
  bool operator==(const Geometry&) const = default;
};

struct LayerCost {
  long long params = 0;     // trainable scalars excluding batch-norm
  long long bn_params = 0;  // trainable batch-norm scalars
  long long flops = 0;      // forward cost per sample, 1 MAC = 2 FLOPs
};

template <class S>
struct ParamRef {
  std::string name;
  Tensor<S>* value = nullptr;
  Tensor<S>* grad = nullptr;  // null for non-trainable state
  bool trainable = false;
  bool batchnorm = false;
};

template <class S>
using ParamVisitor = std::function<void(const ParamRef<S>&)>;

struct Stride3 {
  int64_t t = 1, h = 1, w = 1;
};

// Same-style padding: output = ceil(in / stride); at stride 1 this pads
// (k-1)/2 on each side.
struct AxisPad {
  int64_t lo = 0, hi = 0, out = 0;
};
AxisPad same_pad(int64_t in, int64_t k, int64_t stride);

template <class S>
class Layer {
 public:
  using EnumerateFn =
      std::function<void(const std::string& name, const Layer<S>& layer, const Geometry& in, const Geometry& out)>;

  virtual ~Layer() = default;
  virtual const char* kind() const = 0;
  virtual Tensor<S> forward(const Tensor<S>& x, PassMode mode) = 0;
  virtual Tensor<S> backward(const Tensor<S>& gy) = 0;
  virtual void visit_params(const std::string& prefix, const ParamVisitor<S>& v) { (void)prefix, (void)v; }
  virtual Geometry out_geometry(const Geometry& in) const = 0;
  virtual LayerCost cost(const Geometry& in) const = 0;
  virtual void append_structure(std::vector<std::string>& out) const { out.push_back(kind()); }
  // Walks leaf layers with resolved geometry; returns the output geometry.
  virtual Geometry enumerate(const std::string& name, const Geometry& in, const EnumerateFn& fn) const {
    Geometry out = out_geometry(in);
    fn(name, *this, in, out);
    return out;
  }
};

template <class S>
class PointwiseConv final : public Layer<S> {
 public:
  PointwiseConv(int64_t in_c, int64_t out_c, bool bias);
  const char* kind() const override { return "pointwise"; }
  Tensor<S> forward(const Tensor<S>& x, PassMode mode) override;
  Tensor<S> backward(const Tensor<S>& gy) override;
  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) override;
  Geometry out_geometry(const Geometry& in) const override;
  LayerCost cost(const Geometry& in) const override;

  Tensor<S>& weight() { return weight_; }
  Tensor<S>& bias() { return bias_; }
  bool has_bias() const { return has_bias_; }

 private:
  int64_t in_c_, out_c_;
  bool has_bias_;
  Tensor<S> weight_, weight_grad_;
  Tensor<S> bias_, bias_grad_;
  Tensor<S> cached_x_;
};

template <class S>
class DepthwiseConv final : public Layer<S> {
 public:
  DepthwiseConv(int64_t channels, std::array<int64_t, 3> window, Stride3 stride);
  const char* kind() const override { return "depthwise"; }
  Tensor<S> forward(const Tensor<S>& x, PassMode mode) override;
  Tensor<S> backward(const Tensor<S>& gy) override;
  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) override;
  Geometry out_geometry(const Geometry& in) const override;
  LayerCost cost(const Geometry& in) const override;

  Tensor<S>& weight() { return weight_; }

 private:
  int64_t channels_;
  std::array<int64_t, 3> window_;
  Stride3 stride_;
  Tensor<S> weight_, weight_grad_;
  Tensor<S> cached_x_;
};

// Depthwise convolution with the fixed transform matrix W: every input
// channel expands into 2K frequency-response channels (input-channel major).
// Forward runs the separable per-axis cascade by default; the dense per
// position evaluation is kept as a contractually equal reference path.
template <class S>
class StftConv final : public Layer<S> {
 public:
  StftConv(std::shared_ptr<const StftBasis> basis, Stride3 stride, bool dense_path = false);
  const char* kind() const override { return "stft"; }
  Tensor<S> forward(const Tensor<S>& x, PassMode mode) override;
  Tensor<S> backward(const Tensor<S>& gy) override;
  Geometry out_geometry(const Geometry& in) const override;
  LayerCost cost(const Geometry& in) const override;

  const StftBasis& basis() const { return *basis_; }
  void set_dense_path(bool dense) { dense_path_ = dense; }

 private:
  Tensor<S> forward_separable(const Tensor<S>& x) const;
  Tensor<S> forward_dense(const Tensor<S>& x) const;

  std::shared_ptr<const StftBasis> basis_;
  SeparablePlan plan_;
  Stride3 stride_;
  bool dense_path_;
  Shape cached_in_shape_;
};

// Plain dense 3D convolution; only used by the baseline block kinds, so the
// straightforward loop nest is fine.
template <class S>
class Conv3d final : public Layer<S> {
 public:
  Conv3d(int64_t in_c, int64_t out_c, std::array<int64_t, 3> window, Stride3 stride);
  const char* kind() const override { return "conv3d"; }
  Tensor<S> forward(const Tensor<S>& x, PassMode mode) override;
  Tensor<S> backward(const Tensor<S>& gy) override;
  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) override;
  Geometry out_geometry(const Geometry& in) const override;
  LayerCost cost(const Geometry& in) const override;

  Tensor<S>& weight() { return weight_; }

 private:
  int64_t in_c_, out_c_;
  std::array<int64_t, 3> window_;
  Stride3 stride_;
  Tensor<S> weight_, weight_grad_;
  Tensor<S> cached_x_;
};

// Stand-in for an ablated stage; passes values and gradients through.
template <class S>
class IdentityLayer final : public Layer<S> {
 public:
  const char* kind() const override { return "identity"; }
  Tensor<S> forward(const Tensor<S>& x, PassMode) override { return x; }
  Tensor<S> backward(const Tensor<S>& gy) override { return gy; }
  Geometry out_geometry(const Geometry& in) const override { return in; }
  LayerCost cost(const Geometry&) const override { return {}; }
};

template <class S>
class BatchNorm final : public Layer<S> {
 public:
  explicit BatchNorm(int64_t channels, double eps = 1e-5, double momentum = 0.1);
  const char* kind() const override { return "batchnorm"; }
  Tensor<S> forward(const Tensor<S>& x, PassMode mode) override;
  Tensor<S> backward(const Tensor<S>& gy) override;
  void visit_params(const std::string& prefix, const ParamVisitor<S>& v) override;
  Geometry out_geometry(const Geometry& in) const override { return in; }
  LayerCost cost(const Geometry& in) const override;

  Tensor<S>& gain() { return gain_; }
  Tensor<S>& bias() { return bias_; }
  Tensor<S>& running_mean() { return running_mean_; }
  Tensor<S>& running_var() { return running_var_; }
  void mark_stats_ready() { ready_.data()[0] = S(1); }
  bool stats_ready() const { return ready_.data()[0] != S(0); }

 private:
  int64_t channels_;
  double eps_, momentum_;
  Tensor<S> gain_, gain_grad_, bias_, bias_grad_;
  Tensor<S> running_mean_, running_var_, ready_;
  // forward cache: shared input plus per-channel statistics
  Tensor<S> cached_x_;
  std::vector<S> cached_mean_, cached_invstd_;
  bool cached_batch_mode_ = true;
};

template <class S>
class Activation final : public Layer<S> {
 public:
  Activation(ActKind kind, double slope = 0.01);
  const char* kind() const override { return "activation"; }
  Tensor<S> forward(const Tensor<S>& x, PassMode mode) override;
  Tensor<S> backward(const Tensor<S>& gy) override;
  Geometry out_geometry(const Geometry& in) const override { return in; }
  LayerCost cost(const Geometry& in) const override;

 private:
  ActKind act_;
  S slope_;
  // backward needs only the local derivative: a sign mask for the piecewise
  // linear kinds, the derivative value itself for the exponential ones
  Shape cached_shape_;
  std::vector<uint8_t> cached_mask_;
  std::vector<S> cached_dfactor_;
};

template <class S>
class MaxPool3d final : public Layer<S> {
 public:
  MaxPool3d(std::array<int64_t, 3> window, Stride3 stride);
  const char* kind() const override { return "maxpool"; }
  Tensor<S> forward(const Tensor<S>& x, PassMode mode) override;
  Tensor<S> backward(const Tensor<S>& gy) override;
  Geometry out_geometry(const Geometry& in) const override;
  LayerCost cost(const Geometry& in) const override;

 private:
  std::array<int64_t, 3> window_;
  Stride3 stride_;
  Shape cached_in_shape_;
  std::vector<int64_t> cached_argmax_;
};

// Mean over the spatial axes; output is [b, c, t, 1, 1].
template <class S>
class GlobalAvgPool final : public Layer<S> {
 public:
  const char* kind() const override { return "global_avg_pool"; }
  Tensor<S> forward(const Tensor<S>& x, PassMode mode) override;
  Tensor<S> backward(const Tensor<S>& gy) override;
  Geometry out_geometry(const Geometry& in) const override { return {in.c, in.t, 1, 1}; }
  LayerCost cost(const Geometry& in) const override;

 private:
  Shape cached_in_shape_;
};

// Mean over the remaining temporal axis; output is [b, c, 1, 1, 1].
template <class S>
class TemporalMean final : public Layer<S> {
 public:
  const char* kind() const override { return "temporal_mean"; }
  Tensor<S> forward(const Tensor<S>& x, PassMode mode) override;
  Tensor<S> backward(const Tensor<S>& gy) override;
  Geometry out_geometry(const Geometry& in) const override { return {in.c, 1, 1, 1}; }
  LayerCost cost(const Geometry& in) const override;

 private:
  Shape cached_in_shape_;
};

}  // namespace xstft

#endif  // XSTFT_LAYERS_HPP_
