#include <cmath>
#include <sstream>

#include "doctest.h"
#include "xstft/stft_kernel.hpp"

using namespace xstft;

TEST_CASE("frequency sets match the published lists") {
  auto f3 = enumerate_frequencies(3, 3);
  REQUIRE(f3.K() == 13);
  CHECK(f3.units.front() == std::vector<int>{1, 0, 0});
  CHECK(f3.units.back() == std::vector<int>{0, 0, 1});
  CHECK(f3.freq(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(f3.units[6] == std::vector<int>{1, 1, 0});
  CHECK(f3.units[11] == std::vector<int>{1, -1, -1});

  auto f2 = enumerate_frequencies(2, 3);
  REQUIRE(f2.K() == 4);
  CHECK(f2.units == std::vector<std::vector<int>>{{1, 0}, {0, 1}, {1, 1}, {1, -1}});

  auto f1 = enumerate_frequencies(1, 3);
  REQUIRE(f1.K() == 1);
  CHECK(f1.units == std::vector<std::vector<int>>{{1}});
  CHECK(f1.freq(0, 0) == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS(enumerate_frequencies(3, 4));
  CHECK_THROWS(enumerate_frequencies(3, 1));

  // k follows the window extent
  auto f5 = enumerate_frequencies(3, 5);
  REQUIRE(f5.K() == 13);
  CHECK(f5.freq(0, 0) == doctest::Approx(0.2));
}

TEST_CASE("no zero point and no conjugate pairs") {
  for (int dims : {1, 2, 3}) {
    auto f = enumerate_frequencies(dims, 3);
    for (int i = 0; i < f.K(); ++i) {
      bool all_zero = true;
      for (int v : f.units[static_cast<size_t>(i)]) all_zero &= v == 0;
      CHECK(!all_zero);
      for (int j = 0; j < f.K(); ++j) {
        bool negated = true;
        for (size_t a = 0; a < f.units[static_cast<size_t>(i)].size(); ++a)
          negated &= f.units[static_cast<size_t>(i)][a] == -f.units[static_cast<size_t>(j)][a];
        CHECK(!negated);
      }
    }
  }
}

TEST_CASE("dense W shape, center column and row sums") {
  auto freqs = enumerate_frequencies(3, 3);
  auto basis = build_basis(freqs, {3, 3, 3});
  REQUIRE(basis.W.shape() == Shape{26, 27});

  // center column (delta = 0): Re rows 1, Im rows 0, exactly
  const int64_t center = 13;
  for (int q = 0; q < 13; ++q) {
    CHECK(basis.W.at({2 * q, center}) == 1.0);
    CHECK(basis.W.at({2 * q + 1, center}) == 0.0);
  }

  // every entry has magnitude <= 1
  for (double v : basis.W.values()) CHECK(std::fabs(v) <= 1.0);

  // each row sums to 0 (every point has a non-zero frequency axis)
  for (int64_t row = 0; row < 26; ++row) {
    double s = 0;
    for (int64_t colv = 0; colv < 27; ++colv) s += basis.W.at({row, colv});
    CHECK(std::fabs(s) < 1e-14);
  }
}

TEST_CASE("basis dims/window consistency checks") {
  auto f2 = enumerate_frequencies(2, 3);
  CHECK_THROWS(build_basis(f2, {3, 3, 3}));
  CHECK_NOTHROW(build_basis(f2, {1, 3, 3}));
  auto f1 = enumerate_frequencies(1, 3);
  CHECK_NOTHROW(build_basis(f1, {3, 1, 1}));
  CHECK_THROWS(build_basis(f1, {1, 3, 3}));
  auto f3 = enumerate_frequencies(3, 5);
  CHECK_THROWS(build_basis(f3, {3, 3, 3}));  // extents must match n
}

TEST_CASE("separable factors recompose the dense matrix") {
  for (int64_t n : {3, 5, 7}) {
    for (int dims : {1, 2, 3}) {
      auto freqs = enumerate_frequencies(dims, n);
      std::array<int64_t, 3> window = dims == 3 ? std::array<int64_t, 3>{n, n, n}
                                    : dims == 2 ? std::array<int64_t, 3>{1, n, n}
                                                : std::array<int64_t, 3>{n, 1, 1};
      auto basis = build_basis(freqs, window);
      auto dense = recompose_dense(basis);
      REQUIRE(dense.shape() == basis.W.shape());
      double worst = 0;
      for (int64_t i = 0; i < dense.size(); ++i)
        worst = std::max(worst, std::fabs(dense.data()[i] - basis.W.data()[i]));
      CHECK(worst < 1e-12);
    }
  }
}

TEST_CASE("1d factorization equals the dense basis") {
  auto freqs = enumerate_frequencies(1, 3);
  auto basis = build_basis(freqs, {3, 1, 1});
  const auto& f = factor_separable(basis)[0];
  REQUIRE(basis.W.shape() == Shape{2, 3});
  for (int64_t d = 0; d < 3; ++d) {
    CHECK(basis.W.at({0, d}) == f.kernel_for_unit[2][static_cast<size_t>(d)][0]);
    CHECK(basis.W.at({1, d}) == f.kernel_for_unit[2][static_cast<size_t>(d)][1]);
  }
}

TEST_CASE("separable plan structure and costs") {
  auto f3 = enumerate_frequencies(3, 3);
  auto plan3 = make_separable_plan(f3, {3, 3, 3});
  CHECK(plan3.stages.size() == 3 + 9 + 13);
  // 5n (w: dc,+k,-k) + 25n (9 h-combos) + 42n (13 t-combos) per channel
  CHECK(plan3.total_macs_per_position() == 72 * 3);

  auto f2 = enumerate_frequencies(2, 3);
  auto plan2 = make_separable_plan(f2, {1, 3, 3});
  CHECK(plan2.stages.size() == 3 + 4);
  CHECK(plan2.total_macs_per_position() == 17 * 3);

  auto f1 = enumerate_frequencies(1, 3);
  auto plan1 = make_separable_plan(f1, {3, 1, 1});
  CHECK(plan1.stages.size() == 1);
  CHECK(plan1.total_macs_per_position() == 2 * 3);

  // factor tables: h and w use dc and both signs; t never needs -k because
  // conjugate elimination keeps only points with non-negative t frequency
  auto basis = build_basis(f3, {3, 3, 3});
  for (int a : {1, 2}) {
    const auto& fac = factor_separable(basis)[static_cast<size_t>(a)];
    CHECK(fac.used[0]);
    CHECK(fac.used[1]);
    CHECK(fac.used[2]);
  }
  const auto& fac_t = factor_separable(basis)[0];
  CHECK(!fac_t.used[0]);
  CHECK(fac_t.used[1]);
  CHECK(fac_t.used[2]);
}

TEST_CASE("csv dump has 2K rows") {
  auto basis = build_basis(enumerate_frequencies(2, 3), {1, 3, 3});
  std::ostringstream os;
  write_w_csv(basis, os);
  int lines = 0;
  for (char c : os.str()) lines += c == '\n';
  CHECK(lines == 8);
}
