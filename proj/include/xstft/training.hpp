#ifndef XSTFT_TRAINING_HPP_
#define XSTFT_TRAINING_HPP_

#include <span>
#include <string>
#include <vector>

#include "xstft/config.hpp"
#include "xstft/data.hpp"
#include "xstft/network.hpp"

namespace xstft {

struct TrainConfig {
  int64_t epochs = 30;
  int64_t batch_size = 16;
  double lr = 0.1;
  double lr_decay_factor = 10.0;
  int64_t lr_decay_every = 10;  // epochs per decay step
  double momentum = 0.9;
  double dampening = 0.9;
  double weight_decay = 1e-3;
  uint64_t seed = 1;
  int64_t frames = 16;
  bool multiscale = false;
  bool flip = false;
  std::string precision = "f32";
  int threads = 1;

  void validate() const;
};

// Applies TrainConfig keys from a parsed config; unknown keys throw with the
// offending key named. Keys outside `known_extra` are rejected.
void apply_train_config(TrainConfig& cfg, const KeyValues& kv, const std::vector<std::string>& known_extra = {});

double lr_at_epoch(const TrainConfig& cfg, int64_t epoch);

// Velocity-form update, one tensor at a time:
//   g' = g + weight_decay * w
//   v  = momentum * v + (1 - dampening) * g'
//   w -= lr * v
// Throws on non-finite gradients (divergence guard).
template <class S>
void sgd_step(std::span<S> weights, std::span<const S> grads, std::span<S> velocity, double lr,
              double momentum, double dampening, double weight_decay);

// Mean cross-entropy over the batch from raw logits, with the log-sum-exp
// form; writes d(loss)/d(logits) = (softmax - onehot)/batch into grad_out
// when non-null. Logits may be [b,k] or [b,k,1,1,1].
template <class S>
double cross_entropy(const Tensor<S>& logits, std::span<const int> labels, Tensor<S>* grad_out);

// Row-wise softmax of a logits tensor, same accepted shapes.
template <class S>
Tensor<double> softmax_rows(const Tensor<S>& logits);

struct EvalResult {
  double loss = 0;
  double top1 = 0;
  double top5 = 0;
  int64_t count = 0;
};

template <class S>
EvalResult evaluate(Network<S>& net, const Dataset& ds, const TrainConfig& cfg);

struct TrainResult {
  double best_val_top1 = 0;
  int64_t best_epoch = -1;
  std::string metrics_path;
  std::string best_checkpoint;
  std::string last_checkpoint;
};

// Full loop: shuffled mini-batches, SGD with the pinned update rule, stepwise
// LR decay, per-epoch train/val metrics appended to metrics.csv, best-by-val
// and last checkpoints (model + optimizer state + epoch counter, so resumed
// runs reproduce an uninterrupted run exactly).
template <class S>
TrainResult train_network(Network<S>& net, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                          const std::string& out_dir, const std::string& resume_path = "");

}  // namespace xstft

#endif  // XSTFT_TRAINING_HPP_
