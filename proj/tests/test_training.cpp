#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "test_util.hpp"
#include "xstft/complexity.hpp"
#include "xstft/training.hpp"

using namespace xstft;

namespace {

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

std::string tmp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("sgd update rule pinned by hand arithmetic") {
  std::vector<double> w{1.0}, g{1.0}, v{0.0};
  sgd_step<double>(w, g, v, 0.1, 0.9, 0.9, 1e-3);
  // g' = 1 + 1e-3, v = 0.1 * 1.001 = 0.1001, w = 1 - 0.1 * 0.1001
  CHECK(v[0] == doctest::Approx(0.1001).epsilon(1e-12));
  CHECK(w[0] == doctest::Approx(0.98999).epsilon(1e-12));

  // degenerate case: plain gradient descent
  std::vector<double> w2{2.0}, g2{0.5}, v2{0.0};
  sgd_step<double>(w2, g2, v2, 0.1, 0.0, 0.0, 0.0);
  CHECK(w2[0] == doctest::Approx(2.0 - 0.05).epsilon(1e-15));

  // non-finite gradients abort with a diagnostic
  std::vector<double> w3{1.0}, g3{std::numeric_limits<double>::quiet_NaN()}, v3{0.0};
  CHECK_THROWS(sgd_step<double>(w3, g3, v3, 0.1, 0.9, 0.9, 1e-3));
}

TEST_CASE("cross entropy values and gradient") {
  // uniform logits: loss = ln k
  Tensor<double> logits({3, 7});
  std::vector<int> labels{0, 3, 6};
  CHECK(cross_entropy(logits, labels, static_cast<Tensor<double>*>(nullptr)) ==
        doctest::Approx(std::log(7.0)).epsilon(1e-12));

  // a huge correct logit drives the loss to zero
  Tensor<double> sharp({1, 4});
  sharp.at({0, 2}) = 50.0;
  std::vector<int> l2{2};
  CHECK(cross_entropy(sharp, l2, static_cast<Tensor<double>*>(nullptr)) < 1e-9);

  // gradient vs central differences on random logits
  Rng rng(13);
  Tensor<double> x({4, 7});
  for (auto& v : x.values()) v = rng.next_gaussian();
  std::vector<int> l3{1, 0, 6, 3};
  Tensor<double> grad;
  cross_entropy(x, l3, &grad);
  auto loss = [&]() { return cross_entropy(x, l3, static_cast<Tensor<double>*>(nullptr)); };
  auto res = oracle::grad_check(loss, x.values(), grad.values(), 1e-6);
  CHECK(res.max_rel_err < 1e-7);

  std::vector<int> bad{9, 0, 0, 0};
  CHECK_THROWS(cross_entropy(x, bad, static_cast<Tensor<double>*>(nullptr)));
}

TEST_CASE("lr schedule steps by the configured factor") {
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.lr_decay_factor = 10;
  cfg.lr_decay_every = 40;
  CHECK(lr_at_epoch(cfg, 0) == doctest::Approx(0.1));
  CHECK(lr_at_epoch(cfg, 39) == doctest::Approx(0.1));
  CHECK(lr_at_epoch(cfg, 40) == doctest::Approx(0.01));
  CHECK(lr_at_epoch(cfg, 79) == doctest::Approx(0.01));
  CHECK(lr_at_epoch(cfg, 80) == doctest::Approx(0.001));
  cfg.lr_decay_every = 10;
  CHECK(lr_at_epoch(cfg, 10) == doctest::Approx(0.01));
}

TEST_CASE("one small-lr step decreases the loss on a frozen batch") {
  int decreased = 0;
  const int trials = 20;
  for (int seed = 0; seed < trials; ++seed) {
    NetworkSpec spec = micro_spec(Variant::kT, 4, 8, 16, 16);
    auto net = build_network<double>(spec);
    init_orthogonal(net, static_cast<uint64_t>(seed) + 100);
    Rng rng(static_cast<uint64_t>(seed));
    Tensor<double> batch({4, 3, 8, 16, 16});
    for (auto& v : batch.values()) v = 0.5 + 0.25 * rng.next_gaussian();
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.next_below(4)));

    // collect trainable tensors
    std::vector<std::span<double>> ws, gs;
    net.visit_params([&](const ParamRef<double>& p) {
      if (!p.trainable) return;
      ws.push_back(p.value->values());
      gs.push_back(p.grad->values());
    });
    std::vector<std::vector<double>> vel;
    for (auto& w : ws) vel.emplace_back(w.size(), 0.0);

    Tensor<double> grad;
    zero_grads(net);
    Tensor<double> out = net.forward(batch, PassMode::kTrainFrozenStats);
    const double before = cross_entropy(out, labels, &grad);
    net.backward(grad);
    for (size_t i = 0; i < ws.size(); ++i) sgd_step<double>(ws[i], gs[i], vel[i], 1e-3, 0.9, 0.9, 0.0);
    Tensor<double> out2 = net.forward(batch, PassMode::kTrainFrozenStats);
    const double after = cross_entropy(out2, labels, static_cast<Tensor<double>*>(nullptr));
    if (after < before) ++decreased;
  }
  CHECK(decreased >= 19);  // >= 95% of seeded trials
}

TEST_CASE("gradient accumulation equals one large batch with frozen statistics") {
  NetworkSpec spec = micro_spec(Variant::kT, 4, 8, 16, 16);
  auto net = build_network<double>(spec);
  init_orthogonal(net, 77);
  Rng rng(5);
  Tensor<double> batch({8, 3, 8, 16, 16});
  for (auto& v : batch.values()) v = 0.4 + 0.2 * rng.next_gaussian();
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) labels.push_back(static_cast<int>(rng.next_below(4)));

  // prime the running statistics, then keep them fixed in eval mode
  net.forward(batch, PassMode::kTrain);

  const auto grads_snapshot = [&]() {
    std::vector<double> flat;
    net.visit_params([&](const ParamRef<double>& p) {
      if (!p.trainable) return;
      flat.insert(flat.end(), p.grad->values().begin(), p.grad->values().end());
    });
    return flat;
  };

  zero_grads(net);
  Tensor<double> grad;
  Tensor<double> out = net.forward(batch, PassMode::kEval);
  cross_entropy(out, labels, &grad);
  net.backward(grad);
  const auto full = grads_snapshot();

  zero_grads(net);
  for (int half = 0; half < 2; ++half) {
    Tensor<double> part({4, 3, 8, 16, 16});
    std::copy(batch.data() + half * part.size(), batch.data() + (half + 1) * part.size(), part.data());
    std::vector<int> plabels(labels.begin() + half * 4, labels.begin() + half * 4 + 4);
    Tensor<double> pout = net.forward(part, PassMode::kEval);
    Tensor<double> pgrad;
    cross_entropy(pout, plabels, &pgrad);
    // weight each micro-batch by its share of the large batch
    for (auto& v : pgrad.values()) v *= 0.5;
    net.backward(pgrad);
  }
  const auto accumulated = grads_snapshot();
  REQUIRE(full.size() == accumulated.size());
  double worst = 0;
  for (size_t i = 0; i < full.size(); ++i) worst = std::max(worst, std::fabs(full[i] - accumulated[i]));
  CHECK(worst < 1e-10);
}

TEST_CASE("optimizer touches exactly the counted tensors") {
  NetworkSpec spec = micro_spec(Variant::kS, 4, 8, 16, 16);
  auto net = build_network<float>(spec);
  long long counted = count_trainable_scalars(net, true);
  long long touched = 0;
  net.visit_params([&](const ParamRef<float>& p) {
    if (p.trainable) touched += p.value->size();
  });
  CHECK(counted == touched);
}

TEST_CASE("training loop: determinism, metrics format, resume") {
  Dataset train = gen_direction_dataset(31, 64, 16, 32, 32);
  Dataset val = gen_direction_dataset(32, 24, 16, 32, 32);

  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.lr = 0.01;
  cfg.seed = 9;
  cfg.frames = 16;

  const std::string dir_a = tmp_dir("xstft_train_a");
  const std::string dir_b = tmp_dir("xstft_train_b");
  NetworkSpec spec = micro_spec(Variant::kT, 4, 16, 32, 32);

  auto net_a = build_network<float>(spec);
  init_orthogonal(net_a, cfg.seed);
  auto res_a = train_network(net_a, train, val, cfg, dir_a);

  auto net_b = build_network<float>(spec);
  init_orthogonal(net_b, cfg.seed);
  auto res_b = train_network(net_b, train, val, cfg, dir_b);

  CHECK(file_bytes(res_a.metrics_path) == file_bytes(res_b.metrics_path));
  CHECK(file_bytes(res_a.last_checkpoint) == file_bytes(res_b.last_checkpoint));
  CHECK(file_bytes(res_a.best_checkpoint) == file_bytes(res_b.best_checkpoint));

  // metrics format: epoch,split,loss,top1
  std::ifstream ms(res_a.metrics_path);
  std::string line;
  std::getline(ms, line);
  CHECK(line == "epoch,split,loss,top1");
  std::getline(ms, line);
  CHECK(line.rfind("0,train,", 0) == 0);
  std::getline(ms, line);
  CHECK(line.rfind("0,val,", 0) == 0);

  // resume: run 2 epochs, resume to 3, compare with the uninterrupted run
  const std::string dir_c = tmp_dir("xstft_train_c");
  TrainConfig cfg2 = cfg;
  cfg2.epochs = 2;
  auto net_c = build_network<float>(spec);
  init_orthogonal(net_c, cfg.seed);
  train_network(net_c, train, val, cfg2, dir_c);
  auto net_d = build_network<float>(spec);
  auto res_d = train_network(net_d, train, val, cfg, dir_c, dir_c + "/last.ckpt");
  CHECK(file_bytes(res_d.last_checkpoint) == file_bytes(res_a.last_checkpoint));
  CHECK(file_bytes(res_d.metrics_path) == file_bytes(res_a.metrics_path));

  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
  std::filesystem::remove_all(dir_c);
}

TEST_CASE("config application rejects unknown keys by name") {
  TrainConfig cfg;
  const KeyValues kv = parse_config_text("epochs = 5\nlr = 0.3\n");
  apply_train_config(cfg, kv);
  CHECK(cfg.epochs == 5);
  CHECK(cfg.lr == doctest::Approx(0.3));

  bool named = false;
  try {
    apply_train_config(cfg, parse_config_text("learning_rate = 0.3\n"));
  } catch (const Error& e) {
    named = std::string(e.what()).find("learning_rate") != std::string::npos;
  }
  CHECK(named);

  CHECK_THROWS(apply_train_config(cfg, parse_config_text("momentum = 1.5\n")));
  CHECK_THROWS(parse_config_text("not a key value line\n"));
}
