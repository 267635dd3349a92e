#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "xstft/blocks.hpp"
#include "xstft/complexity.hpp"

using namespace xstft;
using xstft::testutil::random_tensor;

namespace {

long long trainable_non_bn(Layer<double>& layer) {
  long long total = 0;
  layer.visit_params("b", [&](const ParamRef<double>& p) {
    if (p.trainable && !p.batchnorm) total += p.value->size();
  });
  return total;
}

void randomize(Layer<double>& layer, Rng& rng, double scale = 0.4) {
  layer.visit_params("b", [&](const ParamRef<double>& p) {
    if (!p.trainable) return;
    for (auto& v : p.value->values())
      v = p.batchnorm && p.name.ends_with(".gain") ? 1.0 + 0.1 * rng.next_gaussian()
                                                   : scale * rng.next_gaussian();
  });
}

}  // namespace

TEST_CASE("st block trainable parameter census") {
  BlockSpec spec;
  spec.kind = BlockKind::kStStft;
  spec.in_channels = 64;
  spec.bottleneck = 32;
  spec.out_channels = 64;
  auto block = build_block<double>(spec);
  // reduce 64*32 plus expand (26*32)*64, bias-free
  CHECK(trainable_non_bn(*block) == 64 * 32 + 26 * 32 * 64);
  CHECK(trainable_non_bn(*block) == 55296);

  // the transform stage itself owns nothing trainable
  block->visit_params("b", [&](const ParamRef<double>& p) {
    CHECK(p.name.find(".stft.") == std::string::npos);
  });
}

TEST_CASE("block shape contracts") {
  for (BlockKind kind : {BlockKind::kStStft, BlockKind::kSStft, BlockKind::kTStft,
                         BlockKind::kFactDwBaseline, BlockKind::kConv3dBaseline}) {
    BlockSpec spec;
    spec.kind = kind;
    spec.in_channels = 4;
    spec.bottleneck = 3;
    spec.out_channels = 6;
    auto block = build_block<double>(spec);
    Geometry out = block->out_geometry({4, 16, 28, 28});
    CHECK(out == Geometry{6, 16, 28, 28});
  }
  // stride moves the covering stages
  BlockSpec spec;
  spec.kind = BlockKind::kTStft;
  spec.in_channels = 4;
  spec.bottleneck = 3;
  spec.out_channels = 6;
  spec.stride = {1, 2, 2};
  auto block = build_block<double>(spec);
  CHECK(block->out_geometry({4, 16, 28, 28}) == Geometry{6, 16, 14, 14});

  CHECK_THROWS(build_block<double>(BlockSpec{BlockKind::kStStft, 4, 0, 6}));
}

TEST_CASE("zero input stays zero through a block in eval mode") {
  Rng rng(5);
  for (BlockKind kind : {BlockKind::kStStft, BlockKind::kSStft, BlockKind::kTStft}) {
    BlockSpec spec;
    spec.kind = kind;
    spec.in_channels = 2;
    spec.bottleneck = 2;
    spec.out_channels = 3;
    auto block = build_block<double>(spec);
    // random weights, zero biases, neutral running stats
    block->visit_params("b", [&](const ParamRef<double>& p) {
      if (!p.trainable) return;
      if (p.batchnorm) return;  // gain 1 bias 0 from construction
      for (auto& v : p.value->values()) v = rng.next_gaussian();
    });
    block->visit_params("b", [](const ParamRef<double>& p) {
      if (p.name.ends_with(".stats_ready")) p.value->data()[0] = 1.0;
    });
    auto x = Tensor<double>({1, 2, 4, 5, 5});
    auto y = block->forward(x, PassMode::kEval);
    for (double v : y.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("temporal ablation keeps shape, drops the expansion") {
  BlockSpec spec;
  spec.kind = BlockKind::kTStft;
  spec.in_channels = 4;
  spec.bottleneck = 4;
  spec.out_channels = 8;
  auto normal = build_block<double>(spec);
  spec.ablate_temporal = true;
  auto ablated = build_block<double>(spec);
  CHECK(normal->out_geometry({4, 8, 8, 8}) == ablated->out_geometry({4, 8, 8, 8}));
  // expansion pointwise shrinks from 2b -> b inputs
  CHECK(trainable_non_bn(*normal) - trainable_non_bn(*ablated) == 4 * 8);

  // ablation is a t-variant concept only
  BlockSpec bad = spec;
  bad.kind = BlockKind::kSStft;
  CHECK_THROWS(build_block<double>(bad));
}

TEST_CASE("baseline blocks train too") {
  Rng rng(17);
  for (BlockKind kind : {BlockKind::kFactDwBaseline, BlockKind::kConv3dBaseline}) {
    BlockSpec spec;
    spec.kind = kind;
    spec.in_channels = 2;
    spec.bottleneck = 2;
    spec.out_channels = 3;
    auto block = build_block<double>(spec);
    randomize(*block, rng);
    auto x = random_tensor({2, 2, 4, 5, 5}, rng);
    auto y = block->forward(x, PassMode::kTrainFrozenStats);
    auto proj = random_tensor(y.shape(), rng);
    auto loss = [&]() {
      auto out = block->forward(x, PassMode::kTrainFrozenStats);
      double acc = 0;
      for (int64_t i = 0; i < out.size(); ++i) acc += out.data()[i] * proj.data()[i];
      return acc;
    };
    testutil::zero_grads(*block);
    block->forward(x, PassMode::kTrainFrozenStats);
    auto gx = block->backward(proj);
    auto res = oracle::grad_check(loss, x.values(), gx.values(), 1e-5, 100, &rng, true);
    CHECK(res.max_rel_err < 1e-5);
  }
  // fact_dw baseline params: c*b + b*(nh*nw) + b*nt + b*f
  BlockSpec spec;
  spec.kind = BlockKind::kFactDwBaseline;
  spec.in_channels = 8;
  spec.bottleneck = 4;
  spec.out_channels = 16;
  auto block = build_block<double>(spec);
  CHECK(trainable_non_bn(*block) == 8 * 4 + 4 * 9 + 4 * 3 + 4 * 16);
}

TEST_CASE("inception: channel concat, degenerate forms, shape errors") {
  Rng rng(23);
  InceptionSpec spec;
  spec.in_channels = 4;
  spec.pointwise_out = 3;
  BlockSpec b1;
  b1.kind = BlockKind::kTStft;
  b1.in_channels = 4;
  b1.bottleneck = 2;
  b1.out_channels = 5;
  spec.branch1 = b1;
  BlockSpec b2 = b1;
  b2.out_channels = 2;
  spec.branch2 = b2;
  spec.pool_proj = 3;
  auto mod = build_inception<double>(spec);
  CHECK(spec.out_channels() == 13);
  auto x = random_tensor({2, 4, 4, 6, 6}, rng);
  auto y = mod->forward(x, PassMode::kTrainFrozenStats);
  CHECK(y.shape() == Shape{2, 13, 4, 6, 6});

  // degenerate: single branch behaves as the branch alone
  InceptionSpec solo;
  solo.in_channels = 4;
  solo.branch1 = b1;
  auto solo_mod = build_inception<double>(solo);
  auto block = build_block<double>(b1);
  // copy identical parameters into both
  std::vector<Tensor<double>*> mod_params, block_params;
  solo_mod->visit_params("m", [&](const ParamRef<double>& p) { mod_params.push_back(p.value); });
  block->visit_params("m", [&](const ParamRef<double>& p) { block_params.push_back(p.value); });
  REQUIRE(mod_params.size() == block_params.size());
  Rng prng(77);
  for (size_t i = 0; i < mod_params.size(); ++i) {
    for (auto& v : mod_params[i]->values()) v = 0.3 * prng.next_gaussian();
    *block_params[i] = mod_params[i]->clone();
  }
  auto ya = solo_mod->forward(x, PassMode::kTrainFrozenStats);
  auto yb = block->forward(x, PassMode::kTrainFrozenStats);
  REQUIRE(ya.shape() == yb.shape());
  for (int64_t i = 0; i < ya.size(); ++i) CHECK(ya.data()[i] == yb.data()[i]);

  // disagreeing branch strides are an error
  InceptionSpec bad = spec;
  bad.branch2->stride = {1, 2, 2};
  auto bad_mod = build_inception<double>(bad);
  CHECK_THROWS_AS(bad_mod->forward(x, PassMode::kTrainFrozenStats), ShapeError);
}

TEST_CASE("inception gradients via central differences") {
  Rng rng(29);
  InceptionSpec spec;
  spec.in_channels = 3;
  spec.pointwise_out = 2;
  BlockSpec b1;
  b1.kind = BlockKind::kStStft;
  b1.in_channels = 3;
  b1.bottleneck = 1;
  b1.out_channels = 2;
  spec.branch1 = b1;
  BlockSpec b2 = b1;
  b2.kind = BlockKind::kTStft;
  b2.bottleneck = 2;
  spec.branch2 = b2;
  spec.pool_proj = 2;
  auto mod = build_inception<double>(spec);
  randomize(*mod, rng);
  auto x = random_tensor({2, 3, 3, 4, 4}, rng);
  auto y = mod->forward(x, PassMode::kTrainFrozenStats);
  auto proj = random_tensor(y.shape(), rng);
  auto loss = [&]() {
    auto out = mod->forward(x, PassMode::kTrainFrozenStats);
    double acc = 0;
    for (int64_t i = 0; i < out.size(); ++i) acc += out.data()[i] * proj.data()[i];
    return acc;
  };
  testutil::zero_grads(*mod);
  mod->forward(x, PassMode::kTrainFrozenStats);
  auto gx = mod->backward(proj);
  double worst = oracle::grad_check(loss, x.values(), gx.values(), 1e-5, 120, &rng, true).max_rel_err;
  mod->visit_params("m", [&](const ParamRef<double>& p) {
    if (!p.trainable) return;
    worst = std::max(worst, oracle::grad_check(loss, p.value->values(), p.grad->values(), 1e-5, 40, &rng, true)
                                .max_rel_err);
  });
  CHECK(worst < 1e-5);
}

TEST_CASE("replacing the transform stage with identity only changes channels by 2K") {
  BlockSpec spec;
  spec.kind = BlockKind::kTStft;
  spec.in_channels = 4;
  spec.bottleneck = 6;
  spec.out_channels = 8;
  auto normal = build_block<double>(spec);
  // locate the transform stage output channels through the cost walk
  std::vector<std::string> kinds;
  normal->append_structure(kinds);
  CHECK(std::count(kinds.begin(), kinds.end(), "stft") == 1);
  // 2K for the temporal variant is 2: bottleneck 6 expands to 12
  Geometry g{4, 4, 5, 5};
  bool found = false;
  normal->enumerate("blk", g, [&](const std::string&, const Layer<double>& layer, const Geometry& in,
                                  const Geometry& out) {
    if (std::string(layer.kind()) == "stft") {
      CHECK(out.c == 2 * in.c);
      found = true;
    }
  });
  CHECK(found);
}
