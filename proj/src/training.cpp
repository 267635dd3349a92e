#include "xstft/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

namespace xstft {

namespace {

constexpr uint64_t kTagShuffle = 3;

struct ParamSlot {
  std::string name;
  void* value = nullptr;
  void* grad = nullptr;
  int64_t size = 0;
};

template <class S>
std::vector<ParamSlot> trainable_slots(Network<S>& net) {
  std::vector<ParamSlot> slots;
  net.visit_params([&](const ParamRef<S>& p) {
    if (!p.trainable) return;
    slots.push_back({p.name, p.value->data(), p.grad->data(), p.value->size()});
  });
  return slots;
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace

void TrainConfig::validate() const {
  XSTFT_CHECK(lr > 0, "learning rate must be positive");
  XSTFT_CHECK(momentum >= 0 && momentum < 1, "momentum must be in [0,1)");
  XSTFT_CHECK(dampening >= 0 && dampening < 1, "dampening must be in [0,1)");
  XSTFT_CHECK(weight_decay >= 0, "weight decay must be >= 0");
  XSTFT_CHECK(epochs >= 1 && batch_size >= 1 && frames >= 1, "epochs, batch size and frames must be >= 1");
  XSTFT_CHECK(lr_decay_every >= 1 && lr_decay_factor >= 1, "decay schedule must be >= 1");
  XSTFT_CHECK(precision == "f32" || precision == "f64", "precision must be f32 or f64");
  XSTFT_CHECK(threads >= 1, "threads must be >= 1");
}

void apply_train_config(TrainConfig& cfg, const KeyValues& kv, const std::vector<std::string>& known_extra) {
  for (const auto& [key, value] : kv) {
    if (key == "epochs") cfg.epochs = std::stoll(value);
    else if (key == "batch_size") cfg.batch_size = std::stoll(value);
    else if (key == "lr") cfg.lr = std::stod(value);
    else if (key == "lr_decay_factor") cfg.lr_decay_factor = std::stod(value);
    else if (key == "lr_decay_every") cfg.lr_decay_every = std::stoll(value);
    else if (key == "momentum") cfg.momentum = std::stod(value);
    else if (key == "dampening") cfg.dampening = std::stod(value);
    else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "frames") cfg.frames = std::stoll(value);
    else if (key == "multiscale") cfg.multiscale = std::stoll(value) != 0;
    else if (key == "flip") cfg.flip = std::stoll(value) != 0;
    else if (key == "precision") cfg.precision = value;
    else if (key == "threads") cfg.threads = static_cast<int>(std::stoll(value));
    else if (std::find(known_extra.begin(), known_extra.end(), key) != known_extra.end()) continue;
    else throw Error("unknown config key: " + key);
  }
  cfg.validate();
}

double lr_at_epoch(const TrainConfig& cfg, int64_t epoch) {
  const int64_t steps = epoch / cfg.lr_decay_every;
  return cfg.lr / std::pow(cfg.lr_decay_factor, static_cast<double>(steps));
}

template <class S>
void sgd_step(std::span<S> weights, std::span<const S> grads, std::span<S> velocity, double lr,
              double momentum, double dampening, double weight_decay) {
  XSTFT_CHECK_SHAPE(weights.size() == grads.size() && weights.size() == velocity.size(),
                    "sgd tensor length mismatch");
  const S mu = static_cast<S>(momentum);
  const S keep = static_cast<S>(1.0 - dampening);
  const S wd = static_cast<S>(weight_decay);
  const S eta = static_cast<S>(lr);
  for (size_t i = 0; i < weights.size(); ++i) {
    const S g = grads[i];
    if (!std::isfinite(static_cast<double>(g))) throw Error("non-finite gradient: training diverged");
    const S g_reg = g + wd * weights[i];
    velocity[i] = mu * velocity[i] + keep * g_reg;
    weights[i] -= eta * velocity[i];
  }
}

template <class S>
double cross_entropy(const Tensor<S>& logits, std::span<const int> labels, Tensor<S>* grad_out) {
  const int64_t b = logits.extent(0);
  const int64_t k = logits.extent(1);
  XSTFT_CHECK_SHAPE(logits.size() == b * k, "logits must be [b,k] (trailing axes of extent 1)");
  XSTFT_CHECK(static_cast<int64_t>(labels.size()) == b, "one label per batch row");
  if (grad_out && !grad_out->same_shape(logits)) *grad_out = Tensor<S>(logits.shape());
  double total = 0;
  for (int64_t i = 0; i < b; ++i) {
    const int label = labels[static_cast<size_t>(i)];
    XSTFT_CHECK(label >= 0 && label < k, "label out of range");
    const S* row = logits.data() + i * k;
    double mx = static_cast<double>(row[0]);
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0;
    for (int64_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    const double lse = mx + std::log(sum);
    total += lse - static_cast<double>(row[label]);
    if (grad_out) {
      S* g = grad_out->data() + i * k;
      for (int64_t j = 0; j < k; ++j) {
        const double p = std::exp(static_cast<double>(row[j]) - lse);
        g[j] = static_cast<S>((p - (j == label ? 1.0 : 0.0)) / static_cast<double>(b));
      }
    }
  }
  return total / static_cast<double>(b);
}

template <class S>
Tensor<double> softmax_rows(const Tensor<S>& logits) {
  const int64_t b = logits.extent(0);
  const int64_t k = logits.extent(1);
  XSTFT_CHECK_SHAPE(logits.size() == b * k, "logits must be [b,k] (trailing axes of extent 1)");
  Tensor<double> out({b, k});
  for (int64_t i = 0; i < b; ++i) {
    const S* row = logits.data() + i * k;
    double mx = static_cast<double>(row[0]);
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0;
    for (int64_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    for (int64_t j = 0; j < k; ++j)
      out.data()[i * k + j] = std::exp(static_cast<double>(row[j]) - mx) / sum;
  }
  return out;
}

namespace {

template <class S>
std::pair<int64_t, int64_t> top1_top5_hits(const Tensor<S>& logits, std::span<const int> labels) {
  const int64_t b = logits.extent(0), k = logits.extent(1);
  int64_t hit1 = 0, hit5 = 0;
  for (int64_t i = 0; i < b; ++i) {
    const S* row = logits.data() + i * k;
    const int label = labels[static_cast<size_t>(i)];
    const S label_score = row[label];
    int64_t better = 0;
    for (int64_t j = 0; j < k; ++j)
      if (row[j] > label_score || (row[j] == label_score && j < label)) ++better;
    if (better == 0) ++hit1;
    if (better < 5) ++hit5;
  }
  return {hit1, hit5};
}

}  // namespace

template <class S>
EvalResult evaluate(Network<S>& net, const Dataset& ds, const TrainConfig& cfg) {
  EvalResult res;
  const int64_t n = static_cast<int64_t>(ds.header.samples);
  const int64_t bs = cfg.batch_size;
  double loss_sum = 0;
  int64_t hit1 = 0, hit5 = 0;
  for (int64_t start = 0; start < n; start += bs) {
    const int64_t stop = std::min(n, start + bs);
    std::vector<int64_t> idx;
    for (int64_t i = start; i < stop; ++i) idx.push_back(i);
    std::vector<int> labels;
    Tensor<S> batch = assemble_batch<S>(ds, idx, cfg.frames, false, false, false, cfg.seed, 0,
                                        net.spec.height, net.spec.width, &labels);
    Tensor<S> logits = net.forward(batch, PassMode::kEval);
    loss_sum += cross_entropy(logits, labels, static_cast<Tensor<S>*>(nullptr)) *
                static_cast<double>(stop - start);
    auto [h1, h5] = top1_top5_hits(logits, labels);
    hit1 += h1;
    hit5 += h5;
  }
  res.count = n;
  res.loss = loss_sum / static_cast<double>(n);
  res.top1 = static_cast<double>(hit1) / static_cast<double>(n);
  res.top5 = static_cast<double>(hit5) / static_cast<double>(n);
  return res;
}

namespace {

template <class S>
std::vector<CheckpointEntry> training_snapshot(Network<S>& net, const std::vector<Tensor<S>>& velocity,
                                               const std::vector<ParamSlot>& slots, uint64_t next_epoch,
                                               double best_val, int64_t best_epoch) {
  std::vector<CheckpointEntry> entries = snapshot_params(net);
  for (size_t i = 0; i < slots.size(); ++i)
    entries.push_back(make_entry("opt." + slots[i].name, velocity[i]));
  entries.push_back(make_entry_u64("train.epoch", {next_epoch}));
  uint64_t best_bits;
  static_assert(sizeof(best_bits) == sizeof(best_val));
  std::memcpy(&best_bits, &best_val, sizeof(best_bits));
  entries.push_back(make_entry_u64("train.best", {best_bits, static_cast<uint64_t>(best_epoch + 1)}));
  return entries;
}

}  // namespace

template <class S>
TrainResult train_network(Network<S>& net, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                          const std::string& out_dir, const std::string& resume_path) {
  cfg.validate();
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  TrainResult result;
  result.metrics_path = join_path(out_dir, "metrics.csv");
  result.best_checkpoint = join_path(out_dir, "best.ckpt");
  result.last_checkpoint = join_path(out_dir, "last.ckpt");

  auto slots = trainable_slots(net);
  std::vector<Tensor<S>> velocity;
  for (const auto& s : slots) velocity.emplace_back(Shape{s.size});

  int64_t start_epoch = 0;
  double best_val = -1.0;
  int64_t best_epoch = -1;
  if (!resume_path.empty()) {
    const auto entries = read_checkpoint_file(resume_path);
    restore_params(net, entries);
    std::map<std::string, const CheckpointEntry*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;
    for (size_t i = 0; i < slots.size(); ++i) {
      auto it = by_name.find("opt." + slots[i].name);
      XSTFT_CHECK(it != by_name.end(), "checkpoint lacks optimizer state for " + slots[i].name);
      velocity[i] = entry_to_tensor<S>(*it->second);
    }
    auto ep = by_name.find("train.epoch");
    XSTFT_CHECK(ep != by_name.end(), "checkpoint lacks the epoch counter");
    start_epoch = static_cast<int64_t>(entry_to_u64(*ep->second)[0]);
    auto bv = by_name.find("train.best");
    if (bv != by_name.end()) {
      const auto words = entry_to_u64(*bv->second);
      std::memcpy(&best_val, &words[0], sizeof(best_val));
      best_epoch = static_cast<int64_t>(words[1]) - 1;
    }
  }

  std::ofstream metrics(result.metrics_path, start_epoch == 0 ? std::ios::trunc : std::ios::app);
  if (!metrics) throw IoError("cannot open metrics file: " + result.metrics_path);
  if (start_epoch == 0) metrics << "epoch,split,loss,top1\n";

  const int64_t n = static_cast<int64_t>(train.header.samples);
  std::vector<int64_t> order(static_cast<size_t>(n));
  Tensor<S> grad;
  for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle = Rng::stream(cfg.seed, kTagShuffle, static_cast<uint64_t>(epoch));
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle.next_below(static_cast<uint64_t>(i + 1)))]);

    double loss_sum = 0;
    int64_t hit1 = 0;
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
      const int64_t stop = std::min(n, start + cfg.batch_size);
      std::span<const int64_t> idx(order.data() + start, static_cast<size_t>(stop - start));
      std::vector<int> labels;
      Tensor<S> batch = assemble_batch<S>(train, idx, cfg.frames, true, cfg.multiscale, cfg.flip, cfg.seed,
                                          static_cast<uint64_t>(epoch), net.spec.height, net.spec.width, &labels);
      zero_grads(net);
      Tensor<S> logits = net.forward(batch, PassMode::kTrain);
      const double loss = cross_entropy(logits, labels, &grad);
      if (!std::isfinite(loss)) throw Error("non-finite loss: training diverged");
      net.backward(grad);
      for (size_t i = 0; i < slots.size(); ++i)
        sgd_step(std::span<S>(static_cast<S*>(slots[i].value), static_cast<size_t>(slots[i].size)),
                 std::span<const S>(static_cast<const S*>(slots[i].grad), static_cast<size_t>(slots[i].size)),
                 velocity[i].values(), lr, cfg.momentum, cfg.dampening, cfg.weight_decay);
      loss_sum += loss * static_cast<double>(stop - start);
      auto [h1, h5] = top1_top5_hits(logits, labels);
      (void)h5;
      hit1 += h1;
    }
    const double train_loss = loss_sum / static_cast<double>(n);
    const double train_top1 = static_cast<double>(hit1) / static_cast<double>(n);

    EvalResult ev = evaluate(net, val, cfg);
    char line[256];
    std::snprintf(line, sizeof(line), "%lld,train,%.9g,%.9g\n", static_cast<long long>(epoch), train_loss,
                  train_top1);
    metrics << line;
    std::snprintf(line, sizeof(line), "%lld,val,%.9g,%.9g\n", static_cast<long long>(epoch), ev.loss, ev.top1);
    metrics << line;
    metrics.flush();

    if (ev.top1 > best_val) {
      best_val = ev.top1;
      best_epoch = epoch;
      write_checkpoint_file(result.best_checkpoint,
                            training_snapshot(net, velocity, slots, static_cast<uint64_t>(epoch + 1), best_val,
                                              best_epoch));
    }
    write_checkpoint_file(result.last_checkpoint,
                          training_snapshot(net, velocity, slots, static_cast<uint64_t>(epoch + 1), best_val,
                                            best_epoch));
  }
  result.best_val_top1 = best_val;
  result.best_epoch = best_epoch;
  return result;
}

#define XSTFT_INSTANTIATE_TRAINING(S)                                                                     \
  template void sgd_step<S>(std::span<S>, std::span<const S>, std::span<S>, double, double, double,       \
                            double);                                                                      \
  template double cross_entropy<S>(const Tensor<S>&, std::span<const int>, Tensor<S>*);                   \
  template Tensor<double> softmax_rows<S>(const Tensor<S>&);                                              \
  template EvalResult evaluate<S>(Network<S>&, const Dataset&, const TrainConfig&);                       \
  template TrainResult train_network<S>(Network<S>&, const Dataset&, const Dataset&, const TrainConfig&,  \
                                        const std::string&, const std::string&);

XSTFT_INSTANTIATE_TRAINING(float)
XSTFT_INSTANTIATE_TRAINING(double)
#undef XSTFT_INSTANTIATE_TRAINING

}  // namespace xstft
