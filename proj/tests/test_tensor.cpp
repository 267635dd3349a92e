#include <cmath>

#include "doctest.h"
#include "xstft/rng.hpp"
#include "xstft/tensor.hpp"

using namespace xstft;

TEST_CASE("zero_pad basic and identity") {
  Tensor<double> x({1, 3}, {1.0, 2.0, 3.0});
  auto y = zero_pad(x, {{0, 0}, {1, 1}});
  CHECK(y.shape() == Shape{1, 5});
  CHECK(y.at({0, 0}) == 0.0);
  CHECK(y.at({0, 1}) == 1.0);
  CHECK(y.at({0, 2}) == 2.0);
  CHECK(y.at({0, 3}) == 3.0);
  CHECK(y.at({0, 4}) == 0.0);

  auto same = zero_pad(x, {{0, 0}, {0, 0}});
  CHECK(same.shape() == x.shape());
  for (int64_t i = 0; i < x.size(); ++i) CHECK(same.data()[i] == x.data()[i]);

  CHECK_THROWS_AS(zero_pad(x, {{1, 1}}), ShapeError);
}

TEST_CASE("zero_pad preserves the sum on a 4d tensor") {
  Rng rng(7);
  Tensor<double> x({2, 3, 3, 3});
  for (auto& v : x.values()) v = rng.next_double();
  auto y = zero_pad(x, {{0, 0}, {1, 1}, {1, 1}, {1, 1}});
  CHECK(y.shape() == Shape{2, 5, 5, 5});
  // independent recount by scalar loop
  double sx = 0, sy = 0;
  for (auto v : x.values()) sx += v;
  for (auto v : y.values()) sy += v;
  CHECK(sy == doctest::Approx(sx).epsilon(1e-15));
}

TEST_CASE("pad then crop is the identity") {
  Rng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    Shape shape{1 + static_cast<int64_t>(rng.next_below(3)), 1 + static_cast<int64_t>(rng.next_below(4)),
                1 + static_cast<int64_t>(rng.next_below(5))};
    Tensor<double> x(shape);
    for (auto& v : x.values()) v = rng.next_gaussian();
    PadSpec pads;
    for (int a = 0; a < 3; ++a)
      pads.push_back({static_cast<int64_t>(rng.next_below(3)), static_cast<int64_t>(rng.next_below(3))});
    auto back = crop(zero_pad(x, pads), pads);
    REQUIRE(back.shape() == x.shape());
    for (int64_t i = 0; i < x.size(); ++i) CHECK(back.data()[i] == x.data()[i]);
  }
}

TEST_CASE("neighborhood_gather ordering and constant case") {
  Tensor<double> x({3, 3, 3});
  for (int64_t i = 0; i < 27; ++i) x.data()[i] = static_cast<double>(i);
  auto v = neighborhood_gather(x, {1, 1, 1}, 1);
  REQUIRE(v.size() == 27);
  // Declared order is time-major: the full read of a 3x3x3 tensor is 0..26.
  for (int64_t i = 0; i < 27; ++i) CHECK(v[static_cast<size_t>(i)] == static_cast<double>(i));

  auto c = Tensor<double>::full({3, 3, 3}, 4.25);
  auto vc = neighborhood_gather(c, {1, 1, 1}, 1);
  for (double e : vc) CHECK(e == 4.25);

  CHECK_THROWS(neighborhood_gather(x, {0, 1, 1}, 1));
}

TEST_CASE("neighborhood_gather agrees with a scalar triple loop on random cases") {
  Rng rng(99);
  for (int rep = 0; rep < 1000; ++rep) {
    const int64_t t = 3 + static_cast<int64_t>(rng.next_below(4));
    const int64_t h = 3 + static_cast<int64_t>(rng.next_below(4));
    const int64_t w = 3 + static_cast<int64_t>(rng.next_below(4));
    Tensor<double> x({t, h, w});
    for (auto& v : x.values()) v = rng.next_gaussian();
    const int64_t r = 1;
    const std::array<int64_t, 3> c = {r + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(t - 2 * r))),
                                      r + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(h - 2 * r))),
                                      r + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(w - 2 * r)))};
    auto got = neighborhood_gather(x, c, r);
    size_t i = 0;
    for (int64_t dt = -r; dt <= r; ++dt)
      for (int64_t dh = -r; dh <= r; ++dh)
        for (int64_t dw = -r; dw <= r; ++dw, ++i)
          CHECK(got[i] == x.at({c[0] + dt, c[1] + dh, c[2] + dw}));
  }
}

TEST_CASE("matmul identity, reduce_sum, argmax") {
  Tensor<double> eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at({i, i}) = 1.0;
  Tensor<double> v({3, 1}, {2.0, -3.0, 5.0});
  auto out = matmul(eye, v);
  for (int i = 0; i < 3; ++i) CHECK(out.at({i, 0}) == v.at({i, 0}));

  CHECK(reduce_sum(Tensor<double>::full({4, 5}, 1.0)) == 20.0);

  std::vector<double> vals{1.0, 7.0, 7.0, 2.0};
  CHECK(argmax<double>(vals) == 1);  // first maximum wins
}

TEST_CASE("matmul agrees with a scalar triple loop") {
  Rng rng(5);
  Tensor<double> a({8, 8}), b({8, 8});
  for (auto& v : a.values()) v = rng.next_gaussian();
  for (auto& v : b.values()) v = rng.next_gaussian();
  auto c = matmul(a, b);
  double worst = 0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      double acc = 0;
      for (int l = 0; l < 8; ++l) acc += a.at({i, l}) * b.at({l, j});
      worst = std::max(worst, std::fabs(acc - c.at({i, j})));
    }
  CHECK(worst < 1e-12);

  Tensor<double> bad({3, 8});
  CHECK_THROWS_AS(matmul(a, bad), ShapeError);
}

TEST_CASE("axpy and checked indexing") {
  Tensor<double> x({2, 2}, {1, 2, 3, 4});
  Tensor<double> y({2, 2}, {10, 20, 30, 40});
  axpy(2.0, x, y);
  CHECK(y.at({1, 1}) == 48.0);
  CHECK_THROWS(x.at({2, 0}));
  CHECK_THROWS(Tensor<double>({2, 0}));
}
