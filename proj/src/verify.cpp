#include "xstft/verify.hpp"

#include <cmath>
#include <memory>
#include <ostream>

#include "xstft/blocks.hpp"
#include "xstft/oracle.hpp"

namespace xstft {

namespace {

std::array<int64_t, 3> window_for(int dims, int64_t n) {
  if (dims == 3) return {n, n, n};
  if (dims == 2) return {1, n, n};
  return {n, 1, 1};
}

Tensor<double> random4(const Shape& s, Rng& rng) {
  Tensor<double> t(s);
  for (auto& v : t.values()) v = rng.next_gaussian();
  return t;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double worst = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
  return worst;
}

// |fast - brute| on one random shape.
double oracle_case(int dims, int64_t n, Rng& rng) {
  auto basis = std::make_shared<StftBasis>(build_basis(enumerate_frequencies(dims, n), window_for(dims, n)));
  const Shape chw{1 + static_cast<int64_t>(rng.next_below(2)), 3 + static_cast<int64_t>(rng.next_below(4)),
                  3 + static_cast<int64_t>(rng.next_below(4)), 3 + static_cast<int64_t>(rng.next_below(4))};
  Tensor<double> x4 = random4(chw, rng);
  Tensor<double> x5({1, chw[0], chw[1], chw[2], chw[3]});
  std::copy(x4.values().begin(), x4.values().end(), x5.values().begin());
  StftConv<double> layer(basis, Stride3{1, 1, 1});
  Tensor<double> fast = layer.forward(x5, PassMode::kEval);
  Tensor<double> ref = oracle::brute_dft(x4, basis->freqs);
  double worst = 0;
  for (int64_t i = 0; i < ref.size(); ++i)
    worst = std::max(worst, std::fabs(fast.data()[i] - ref.data()[i]));
  return worst;
}

}  // namespace

VerifyReport run_verify_suite(const VerifyOptions& options) {
  VerifyReport report;
  Rng rng(options.seed);
  const auto add = [&](const std::string& name, double worst, double tol) {
    report.items.push_back({name, worst, tol, worst < tol});
  };

  // 1. fast separable path vs brute-force reference on random shapes
  {
    double worst = 0;
    for (int i = 0; i < options.oracle_shapes; ++i) {
      const int dims = 1 + static_cast<int>(rng.next_below(3));
      const int64_t n = rng.next_below(2) ? 5 : 3;
      worst = std::max(worst, oracle_case(dims, n, rng));
    }
    add("oracle equivalence (separable vs brute dft, " + std::to_string(options.oracle_shapes) + " shapes)",
        worst, 1e-10);
  }

  // 2. dc rejection and center-delta response
  {
    auto basis = std::make_shared<StftBasis>(build_basis(enumerate_frequencies(3, 3), {3, 3, 3}));
    StftConv<double> layer(basis, Stride3{1, 1, 1});
    auto ones = Tensor<double>::full({1, 1, 5, 5, 5}, 1.0);
    auto y = layer.forward(ones, PassMode::kEval);
    double worst = 0;
    for (int q = 0; q < 26; ++q)
      for (int64_t t = 1; t < 4; ++t)
        for (int64_t h = 1; h < 4; ++h)
          for (int64_t w = 1; w < 4; ++w) worst = std::max(worst, std::fabs(y.at({0, q, t, h, w})));
    add("dc rejection (constant input, interior positions)", worst, 1e-12);

    Tensor<double> delta({1, 1, 3, 3, 3});
    delta.at({0, 0, 1, 1, 1}) = 1.0;
    auto yd = layer.forward(delta, PassMode::kEval);
    double worst_delta = 0;
    for (int q = 0; q < 13; ++q) {
      worst_delta = std::max(worst_delta, std::fabs(yd.at({0, 2 * q, 1, 1, 1}) - 1.0));
      worst_delta = std::max(worst_delta, std::fabs(yd.at({0, 2 * q + 1, 1, 1, 1})));
    }
    add("center-delta response ([1,0] per frequency point)", worst_delta, 1e-15);
  }

  // 3. separable factors recompose dense W
  {
    double worst = 0;
    for (int64_t n : {3, 5, 7})
      for (int dims : {1, 2, 3}) {
        auto basis = build_basis(enumerate_frequencies(dims, n), window_for(dims, n));
        worst = std::max(worst, max_abs_diff(recompose_dense(basis), basis.W));
      }
    add("separable factors recompose dense W (n in {3,5,7})", worst, 1e-12);
  }

  // 4. basis invariants: row sums and entry magnitudes
  {
    double worst_sum = 0, worst_mag = 0;
    for (int dims : {1, 2, 3}) {
      auto basis = build_basis(enumerate_frequencies(dims, 3), window_for(dims, 3));
      const int64_t rows = basis.W.extent(0), cols = basis.W.extent(1);
      for (int64_t i = 0; i < rows; ++i) {
        double s = 0;
        for (int64_t j = 0; j < cols; ++j) {
          s += basis.W.at({i, j});
          worst_mag = std::max(worst_mag, std::fabs(basis.W.at({i, j})) - 1.0);
        }
        worst_sum = std::max(worst_sum, std::fabs(s));
      }
    }
    add("dc rejection of W rows (row sums)", worst_sum, 1e-14);
    add("entry magnitudes <= 1", worst_mag, 1e-15);
  }

  // 5. separable vs dense layer path
  {
    auto basis = std::make_shared<StftBasis>(build_basis(enumerate_frequencies(3, 3), {3, 3, 3}));
    StftConv<double> fast(basis, Stride3{1, 2, 2}, false);
    StftConv<double> dense(basis, Stride3{1, 2, 2}, true);
    Tensor<double> x = random4({1, 2, 4, 6, 6}, rng);
    Tensor<double> x5({1, 2, 4, 6, 6});
    x5 = x;
    add("separable vs dense path (strided)",
        max_abs_diff(fast.forward(x5, PassMode::kEval), dense.forward(x5, PassMode::kEval)), 1e-10);
  }

  if (options.include_gradients) {
    // 6. input and parameter gradients through composed blocks, which
    // exercises every layer kind end to end
    for (BlockKind kind : {BlockKind::kStStft, BlockKind::kSStft, BlockKind::kTStft}) {
      BlockSpec spec;
      spec.kind = kind;
      spec.in_channels = 2;
      spec.bottleneck = 2;
      spec.out_channels = 3;
      auto block = build_block<double>(spec);
      block->visit_params("b", [&](const ParamRef<double>& p) {
        if (!p.trainable) return;
        for (auto& v : p.value->values())
          v = p.batchnorm && p.name.ends_with(".gain") ? 1.0 + 0.2 * rng.next_gaussian()
                                                       : 0.5 * rng.next_gaussian();
      });
      Tensor<double> x = random4({2, 2, 4, 5, 5}, rng);
      Tensor<double> y = block->forward(x, PassMode::kTrainFrozenStats);
      Tensor<double> proj = random4(y.shape(), rng);
      auto loss = [&]() {
        Tensor<double> out = block->forward(x, PassMode::kTrainFrozenStats);
        double acc = 0;
        for (int64_t i = 0; i < out.size(); ++i) acc += out.data()[i] * proj.data()[i];
        return acc;
      };
      block->visit_params("b", [](const ParamRef<double>& p) {
        if (p.grad) std::fill(p.grad->values().begin(), p.grad->values().end(), 0.0);
      });
      block->forward(x, PassMode::kTrainFrozenStats);
      Tensor<double> gx = block->backward(proj);
      auto res = oracle::grad_check(loss, x.values(), gx.values(), 1e-5, 120, &rng, true);
      double worst = res.max_rel_err;
      block->visit_params("b", [&](const ParamRef<double>& p) {
        if (!p.trainable) return;
        auto r = oracle::grad_check(loss, p.value->values(), p.grad->values(), 1e-5, 60, &rng, true);
        worst = std::max(worst, r.max_rel_err);
      });
      add("block gradient vs central differences (" + to_string(kind) + ")", worst, 1e-5);
    }
  }
  return report;
}

void print_verify_report(const VerifyReport& report, std::ostream& os) {
  for (const auto& it : report.items) {
    char line[256];
    std::snprintf(line, sizeof(line), "[%s] %-62s worst %.3e (tol %.0e)", it.pass ? "PASS" : "FAIL",
                  it.name.c_str(), it.worst, it.tolerance);
    os << line << '\n';
  }
  os << (report.all_pass() ? "verification passed" : "verification FAILED") << '\n';
}

}  // namespace xstft
