// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// summary line with the measured values.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "test_util.hpp"
#include "xstft/complexity.hpp"
#include "xstft/data.hpp"
#include "xstft/oracle.hpp"
#include "xstft/runtime.hpp"
#include "xstft/training.hpp"
#include "xstft/verify.hpp"

using namespace xstft;
using Clock = std::chrono::steady_clock;

namespace {

struct AllocatorSetup {
  AllocatorSetup() { tune_allocator(); }
} g_allocator_setup;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report_line(int criterion, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name, detail.c_str());
  std::fflush(stdout);
}

std::string run_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / "xstft_acceptance" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

// Shared micro-training artifacts so the learning demonstration runs once.
struct Criterion6Artifacts {
  bool ran = false;
  double train_seconds = 0;
  double best_val = 0;
  double ablated_val = 0;
  double flip_rate = 0;
  int64_t flip_total = 0;
};
Criterion6Artifacts g_c6;

constexpr uint64_t kTrainSeed = 7;
constexpr uint64_t kTrainDataSeed = 11;
constexpr uint64_t kValDataSeed = 12;

TrainConfig acceptance_train_config() {
  TrainConfig cfg;
  cfg.epochs = 12;  // converges in a handful; the bound is 30
  cfg.batch_size = 16;
  cfg.lr = 0.02;
  cfg.lr_decay_factor = 10;
  cfg.lr_decay_every = 10;
  cfg.momentum = 0.9;
  cfg.dampening = 0.9;
  cfg.weight_decay = 1e-3;
  cfg.seed = kTrainSeed;
  cfg.frames = 16;
  return cfg;
}

}  // namespace

TEST_CASE("criterion 1: oracle equivalence of the separable transform") {
  const auto t0 = Clock::now();
  VerifyOptions options;
  options.seed = 2024;
  options.oracle_shapes = 50;
  options.include_gradients = false;
  VerifyReport rep = run_verify_suite(options);
  double worst = 0;
  bool pass = false;
  for (const auto& item : rep.items)
    if (item.name.starts_with("oracle equivalence")) {
      worst = item.worst;
      pass = item.pass;
    }
  char detail[160];
  std::snprintf(detail, sizeof(detail), "50 shapes, dims 1-3, n in {3,5}; max abs diff %.3e < 1e-10; %.1f s",
                worst, seconds_since(t0));
  report_line(1, "separable forward equals brute-force evaluation", pass, detail);
  CHECK(pass);
  CHECK(seconds_since(t0) < 120.0);
}

TEST_CASE("criterion 2: dc rejection and center-delta response") {
  auto basis = std::make_shared<StftBasis>(build_basis(enumerate_frequencies(3, 3), {3, 3, 3}));
  StftConv<double> layer(basis, Stride3{1, 1, 1});
  auto ones = Tensor<double>::full({1, 2, 5, 5, 5}, 3.25);
  auto y = layer.forward(ones, PassMode::kEval);
  double worst_dc = 0;
  for (int ch = 0; ch < 52; ++ch)
    for (int64_t t = 1; t < 4; ++t)
      for (int64_t h = 1; h < 4; ++h)
        for (int64_t w = 1; w < 4; ++w)
          worst_dc = std::max(worst_dc, std::fabs(y.at({0, ch, t, h, w})));

  Tensor<double> delta({1, 1, 3, 3, 3});
  delta.at({0, 0, 1, 1, 1}) = 1.0;
  auto yd = layer.forward(delta, PassMode::kEval);
  bool delta_exact = true;
  for (int q = 0; q < 13; ++q) {
    delta_exact &= yd.at({0, 2 * q, 1, 1, 1}) == 1.0;
    delta_exact &= yd.at({0, 2 * q + 1, 1, 1, 1}) == 0.0;
  }
  const bool pass = worst_dc < 1e-12 && delta_exact;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "constant input interior max %.3e < 1e-12; delta response exact [1,0]x13",
                worst_dc);
  report_line(2, "dc rejection and center-delta response", pass, detail);
  CHECK(worst_dc < 1e-12);
  CHECK(delta_exact);
}

TEST_CASE("criterion 3: gradient fidelity for every layer kind and the micro network") {
  const auto t0 = Clock::now();
  Rng rng(404);
  double worst_layer = 0;

  const auto probe = [&](Layer<double>& layer, const Shape& in_shape, PassMode mode) {
    auto x = testutil::random_tensor(in_shape, rng);
    return testutil::layer_grad_check(layer, x, rng, mode);
  };

  {
    PointwiseConv<double> pw(3, 4, true);
    pw.visit_params("p", [&](const ParamRef<double>& p) {
      for (auto& v : p.value->values()) v = rng.next_gaussian();
    });
    worst_layer = std::max(worst_layer, probe(pw, {2, 3, 3, 4, 4}, PassMode::kEval));
  }
  {
    DepthwiseConv<double> dw(3, {1, 3, 3}, {1, 2, 2});
    for (auto& v : dw.weight().values()) v = rng.next_gaussian();
    worst_layer = std::max(worst_layer, probe(dw, {2, 3, 3, 6, 6}, PassMode::kEval));
    DepthwiseConv<double> dwt(2, {3, 1, 1}, {1, 1, 1});
    for (auto& v : dwt.weight().values()) v = rng.next_gaussian();
    worst_layer = std::max(worst_layer, probe(dwt, {2, 2, 5, 3, 3}, PassMode::kEval));
  }
  {
    Conv3d<double> c3(2, 3, {3, 3, 3}, {1, 1, 1});
    for (auto& v : c3.weight().values()) v = 0.3 * rng.next_gaussian();
    worst_layer = std::max(worst_layer, probe(c3, {2, 2, 3, 4, 4}, PassMode::kEval));
  }
  for (int dims : {1, 2, 3}) {
    std::array<int64_t, 3> window = dims == 3 ? std::array<int64_t, 3>{3, 3, 3}
                                  : dims == 2 ? std::array<int64_t, 3>{1, 3, 3}
                                              : std::array<int64_t, 3>{3, 1, 1};
    auto basis = std::make_shared<StftBasis>(build_basis(enumerate_frequencies(dims, 3), window));
    StftConv<double> stft(basis, Stride3{1, 1, 1});
    worst_layer = std::max(worst_layer, probe(stft, {1, 2, 4, 4, 4}, PassMode::kEval));
  }
  {
    BatchNorm<double> bn(3);
    for (auto& v : bn.gain().values()) v = 1.0 + 0.2 * rng.next_gaussian();
    for (auto& v : bn.bias().values()) v = 0.1 * rng.next_gaussian();
    worst_layer = std::max(worst_layer, probe(bn, {3, 3, 2, 3, 3}, PassMode::kTrainFrozenStats));
    bn.forward(testutil::random_tensor({3, 3, 2, 3, 3}, rng), PassMode::kTrain);
    worst_layer = std::max(worst_layer, probe(bn, {3, 3, 2, 3, 3}, PassMode::kEval));
  }
  for (ActKind kind : {ActKind::kLeakyRelu, ActKind::kRelu, ActKind::kSelu, ActKind::kElu}) {
    Activation<double> act(kind);
    Tensor<double> x({1, 2, 2, 3, 3});
    for (auto& v : x.values()) {
      do {
        v = rng.next_gaussian();
      } while (std::fabs(v) < 1e-3);  // probes stay away from the origin kink
    }
    worst_layer = std::max(worst_layer, testutil::layer_grad_check(act, x, rng, PassMode::kEval));
  }
  {
    MaxPool3d<double> pool({3, 3, 3}, {2, 2, 2});
    worst_layer = std::max(worst_layer, probe(pool, {2, 2, 5, 6, 6}, PassMode::kEval));
    GlobalAvgPool<double> gap;
    worst_layer = std::max(worst_layer, probe(gap, {2, 3, 4, 5, 5}, PassMode::kEval));
    TemporalMean<double> tm;
    worst_layer = std::max(worst_layer, probe(tm, {2, 3, 4, 1, 1}, PassMode::kEval));
  }

  // full micro network end to end at 64-bit
  NetworkSpec spec = micro_spec(Variant::kT, 4, 16, 32, 32);
  auto net = build_network<double>(spec);
  init_orthogonal(net, 5);
  Dataset tiny = gen_direction_dataset(77, 4, 16, 32, 32);
  std::vector<int64_t> idx{0, 1};
  std::vector<int> labels;
  Tensor<double> batch = assemble_batch<double>(tiny, idx, 16, false, false, false, 1, 0, 32, 32, &labels);
  Tensor<double> grad;
  auto loss = [&]() {
    Tensor<double> out = net.forward(batch, PassMode::kTrainFrozenStats);
    return cross_entropy(out, labels, static_cast<Tensor<double>*>(nullptr));
  };
  zero_grads(net);
  Tensor<double> out = net.forward(batch, PassMode::kTrainFrozenStats);
  cross_entropy(out, labels, &grad);
  net.backward(grad);
  double worst_net = 0;
  net.visit_params([&](const ParamRef<double>& p) {
    if (!p.trainable) return;
    auto r = oracle::grad_check(loss, p.value->values(), p.grad->values(), 1e-5, 6, &rng, true);
    worst_net = std::max(worst_net, r.max_rel_err);
  });
  const bool pass = worst_layer < 1e-5 && worst_net < 1e-4;
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "layers max rel err %.3e < 1e-5; micro network %.3e < 1e-4; %.1f s", worst_layer, worst_net,
                seconds_since(t0));
  report_line(3, "central-difference gradient checks", pass, detail);
  CHECK(worst_layer < 1e-5);
  CHECK(worst_net < 1e-4);
  CHECK(seconds_since(t0) < 600.0);
}

TEST_CASE("criterion 4: full-scale parameter totals against the reference table") {
  const struct {
    Variant v;
    double target;
  } rows[] = {{Variant::kSt, 5.84e6}, {Variant::kS, 6.03e6}, {Variant::kT, 6.27e6}};
  bool pass = true;
  std::string detail;
  for (const auto& row : rows) {
    auto net = build_network<float>(full_scale_spec(row.v, 174, 16, 112, 112));
    auto report = analyze_network(net);
    const double with_bn = static_cast<double>(report.params_with_bn());
    const double without_bn = static_cast<double>(report.total_params);
    const double dev = (with_bn - row.target) / row.target;
    pass &= std::fabs(dev) < 0.10 && std::fabs((without_bn - row.target) / row.target) < 0.10;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "%s %.3fM/%.3fM (with/without bn) vs %.2fM (%+.1f%%); ",
                  to_string(row.v).c_str(), with_bn / 1e6, without_bn / 1e6, row.target / 1e6, 100 * dev);
    detail += buf;
  }
  report_line(4, "parameter totals within 10% of the reference rows", pass, detail);
  CHECK(pass);
}

TEST_CASE("criterion 5: flop totals and exact doubling in clip length") {
  const struct {
    Variant v;
    double target;
  } rows[] = {{Variant::kSt, 10.63e9}, {Variant::kS, 10.39e9}, {Variant::kT, 10.30e9}};
  bool pass = true;
  std::string detail;
  for (const auto& row : rows) {
    auto net16 = build_network<float>(full_scale_spec(row.v, 174, 16, 112, 112));
    auto net32 = build_network<float>(full_scale_spec(row.v, 174, 32, 112, 112));
    auto r16 = analyze_network(net16);
    auto r32 = analyze_network(net32);
    const double dev = (static_cast<double>(r16.total_flops) - row.target) / row.target;
    const bool doubled = r32.total_flops == 2 * r16.total_flops;
    pass &= std::fabs(dev) < 0.15 && doubled;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "%s %.2fG vs %.2fG (%+.1f%%), x2 at 32 frames: %s; ",
                  to_string(row.v).c_str(), static_cast<double>(r16.total_flops) / 1e9, row.target / 1e9,
                  100 * dev, doubled ? "exact" : "BROKEN");
    detail += buf;
  }
  report_line(5, "flop totals within 15% and exact linearity in T", pass, detail);
  CHECK(pass);
}

TEST_CASE("criterion 6: temporal learning demonstration on the direction task") {
  const auto t0 = Clock::now();
  const std::string dir = run_dir("c6");
  Dataset train = gen_direction_dataset(kTrainDataSeed, 2000, 16, 32, 32);
  Dataset val = gen_direction_dataset(kValDataSeed, 500, 16, 32, 32);
  TrainConfig cfg = acceptance_train_config();

  NetworkSpec spec = micro_spec(Variant::kT, 4, 16, 32, 32);
  auto net = build_network<float>(spec);
  init_orthogonal(net, cfg.seed);
  const auto train_start = Clock::now();
  TrainResult result = train_network(net, train, val, cfg, dir + "/main");
  g_c6.train_seconds = seconds_since(train_start);
  g_c6.best_val = result.best_val_top1;

  // temporal-ablated control: per-frame identity in place of the temporal
  // transform, same data, same recipe
  NetworkSpec ablated_spec = micro_spec(Variant::kT, 4, 16, 32, 32, 0.125, true);
  auto ablated = build_network<float>(ablated_spec);
  init_orthogonal(ablated, cfg.seed);
  TrainResult ablated_result = train_network(ablated, train, val, cfg, dir + "/ablated");
  g_c6.ablated_val = ablated_result.best_val_top1;

  // frame-reversal flips: reload the best model, walk correctly-classified
  // up/down clips and check the reversed clip predicts the opposite label
  restore_params(net, read_checkpoint_file(result.best_checkpoint));
  int64_t flipped = 0, eligible = 0;
  const int64_t n = static_cast<int64_t>(val.header.samples);
  std::vector<int64_t> fwd_idx(16), rev_idx(16);
  for (int64_t i = 0; i < 16; ++i) {
    fwd_idx[static_cast<size_t>(i)] = i;
    rev_idx[static_cast<size_t>(i)] = 15 - i;
  }
  for (int64_t s = 0; s < n; ++s) {
    const int label = static_cast<int>(val.labels[static_cast<size_t>(s)]);
    if (label > 1) continue;  // up/down only
    Tensor<float> clip = load_clip<float>(val, s, fwd_idx);
    Tensor<float> rclip = load_clip<float>(val, s, rev_idx);
    Tensor<float> x({1, 3, 16, 32, 32});
    std::copy(clip.values().begin(), clip.values().end(), x.values().begin());
    Tensor<float> logits = net.forward(x, PassMode::kEval);
    const int pred = static_cast<int>(argmax(std::span<const float>(logits.data(), 4)));
    if (pred != label) continue;
    ++eligible;
    std::copy(rclip.values().begin(), rclip.values().end(), x.values().begin());
    Tensor<float> rlogits = net.forward(x, PassMode::kEval);
    const int rpred = static_cast<int>(argmax(std::span<const float>(rlogits.data(), 4)));
    if (rpred == (label == 0 ? 1 : 0)) ++flipped;
  }
  g_c6.flip_rate = eligible ? static_cast<double>(flipped) / static_cast<double>(eligible) : 0.0;
  g_c6.flip_total = eligible;
  g_c6.ran = true;

  const bool pass = g_c6.best_val >= 0.95 && g_c6.ablated_val <= 0.40 && g_c6.flip_rate >= 0.90 &&
                    g_c6.train_seconds < 900.0;
  char detail[240];
  std::snprintf(detail, sizeof(detail),
                "val top1 %.3f >= 0.95 in %lld epochs (%.0f s < 900 s); ablated control %.3f <= 0.40; "
                "reversal flips %.1f%% of %lld correct up/down clips >= 90%%; total %.0f s",
                g_c6.best_val, static_cast<long long>(cfg.epochs), g_c6.train_seconds, g_c6.ablated_val,
                100 * g_c6.flip_rate, static_cast<long long>(g_c6.flip_total), seconds_since(t0));
  report_line(6, "micro temporal-direction learning", pass, detail);
  CHECK(g_c6.best_val >= 0.95);
  CHECK(g_c6.ablated_val <= 0.40);
  CHECK(g_c6.flip_rate >= 0.90);
  CHECK(g_c6.train_seconds < 900.0);
}

TEST_CASE("criterion 7: structural invariants") {
  bool stft_zero_params = true;
  bool expansion_ok = true;
  // transform stages own no trainable parameters; channel expansion is 2K
  for (Variant v : {Variant::kSt, Variant::kS, Variant::kT}) {
    auto net = build_network<float>(micro_spec(v, 4, 16, 32, 32));
    auto report = analyze_network(net);
    for (const auto& row : report.rows)
      if (row.kind == "stft") stft_zero_params &= row.params == 0 && row.bn_params == 0;
    const int two_k = v == Variant::kSt ? 26 : v == Variant::kS ? 8 : 2;
    net.body->enumerate("net", net.spec.input_geometry(),
                        [&](const std::string&, const Layer<float>& layer, const Geometry& in,
                            const Geometry& out) {
                          if (std::string(layer.kind()) == "stft") expansion_ok &= out.c == two_k * in.c;
                        });
  }

  // orthogonal init on every trainable matrix of the micro network
  auto net = build_network<double>(micro_spec(Variant::kT, 4, 16, 32, 32));
  init_orthogonal(net, 2027);
  double worst_gram = 0;
  net.visit_params([&](const ParamRef<double>& p) {
    if (!p.trainable || p.batchnorm || p.value->rank() < 2) return;
    const int64_t rows = p.value->extent(0);
    const int64_t cols = p.value->size() / rows;
    const bool wide = rows <= cols;
    const int64_t k = wide ? rows : cols;
    for (int64_t i = 0; i < k; ++i)
      for (int64_t j = 0; j < k; ++j) {
        double dot = 0;
        if (wide)
          for (int64_t l = 0; l < cols; ++l) dot += p.value->data()[i * cols + l] * p.value->data()[j * cols + l];
        else
          for (int64_t l = 0; l < rows; ++l) dot += p.value->data()[l * cols + i] * p.value->data()[l * cols + j];
        worst_gram = std::max(worst_gram, std::fabs(dot - (i == j ? 1.0 : 0.0)));
      }
  });

  // softmax rows sum to one
  Rng rng(606);
  Tensor<double> logits({8, 174});
  for (auto& v : logits.values()) v = 15.0 * rng.next_gaussian();
  auto p = softmax_rows(logits);
  double worst_sum = 0;
  bool nonneg = true;
  for (int64_t i = 0; i < 8; ++i) {
    double s = 0;
    for (int64_t j = 0; j < 174; ++j) {
      s += p.at({i, j});
      nonneg &= p.at({i, j}) >= 0.0;
    }
    worst_sum = std::max(worst_sum, std::fabs(s - 1.0));
  }

  const bool pass = stft_zero_params && expansion_ok && worst_gram < 1e-5 && worst_sum < 1e-9 && nonneg;
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "transform stages 0 params: %s; 2K expansion: %s; ||WW'-I||max %.2e < 1e-5; softmax sums "
                "within %.1e",
                stft_zero_params ? "yes" : "NO", expansion_ok ? "yes" : "NO", worst_gram, worst_sum);
  report_line(7, "structural invariants", pass, detail);
  CHECK(pass);
}

TEST_CASE("criterion 8: bit-identical artifacts under a fixed seed") {
  const std::string dir = run_dir("c8");
  // dataset files
  Dataset d1 = gen_direction_dataset(55, 200, 16, 32, 32);
  Dataset d2 = gen_direction_dataset(55, 200, 16, 32, 32);
  write_dataset(dir + "/a.xvid", d1);
  write_dataset(dir + "/b.xvid", d2);
  const bool data_ok = file_bytes(dir + "/a.xvid") == file_bytes(dir + "/b.xvid");

  // training artifacts: two serial runs of the same seeded config
  Dataset train = gen_direction_dataset(56, 64, 16, 32, 32);
  Dataset val = gen_direction_dataset(57, 24, 16, 32, 32);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.lr = 0.02;
  cfg.seed = 4;
  cfg.frames = 16;
  NetworkSpec spec = micro_spec(Variant::kT, 4, 16, 32, 32);
  std::string metrics[2], last[2], best[2];
  for (int r = 0; r < 2; ++r) {
    auto net = build_network<float>(spec);
    init_orthogonal(net, cfg.seed);
    auto result = train_network(net, train, val, cfg, dir + "/run" + std::to_string(r));
    metrics[r] = file_bytes(result.metrics_path);
    last[r] = file_bytes(result.last_checkpoint);
    best[r] = file_bytes(result.best_checkpoint);
  }
  const bool metrics_ok = metrics[0] == metrics[1];
  const bool ckpt_ok = last[0] == last[1] && best[0] == best[1];
  const bool pass = data_ok && metrics_ok && ckpt_ok;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "dataset files: %s; metrics csv: %s; checkpoints: %s",
                data_ok ? "identical" : "DIFFER", metrics_ok ? "identical" : "DIFFER",
                ckpt_ok ? "identical" : "DIFFER");
  report_line(8, "seeded determinism of files, metrics and checkpoints", pass, detail);
  CHECK(pass);
}
