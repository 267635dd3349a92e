#include "xstft/stft_kernel.hpp"

#include <cmath>
#include <map>
#include <ostream>

namespace xstft {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// The published point lists, as integer multiples of k. 3D axes are
// (t, h, w); 2D covers (h, w); 1D covers (t).
const std::vector<std::vector<int>> kPoints3d = {
    {1, 0, 0}, {1, 0, 1}, {1, 0, -1}, {0, 1, 0},  {0, 1, 1},   {0, 1, -1}, {1, 1, 0},
    {1, 1, 1}, {1, 1, -1}, {1, -1, 0}, {1, -1, 1}, {1, -1, -1}, {0, 0, 1}};
const std::vector<std::vector<int>> kPoints2d = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
const std::vector<std::vector<int>> kPoints1d = {{1}};

// cos/sin of 2*pi*m/n via a shared table so equal angles give equal doubles.
struct UnitCircle {
  explicit UnitCircle(int64_t n) : n_(n), re_(static_cast<size_t>(n)), im_(static_cast<size_t>(n)) {
    for (int64_t j = 0; j < n; ++j) {
      const double a = kTwoPi * static_cast<double>(j) / static_cast<double>(n);
      re_[static_cast<size_t>(j)] = std::cos(a);
      im_[static_cast<size_t>(j)] = std::sin(a);
    }
    re_[0] = 1.0;
    im_[0] = 0.0;
  }
  double re(int64_t m) const { return re_[static_cast<size_t>(((m % n_) + n_) % n_)]; }
  double im(int64_t m) const { return im_[static_cast<size_t>(((m % n_) + n_) % n_)]; }

 private:
  int64_t n_;
  std::vector<double> re_, im_;
};

// Maps a point's `dims` units onto the (t,h,w) axis triple.
std::array<int, 3> map_units(const std::vector<int>& u, int dims) {
  if (dims == 3) return {u[0], u[1], u[2]};
  if (dims == 2) return {0, u[0], u[1]};
  return {u[0], 0, 0};
}

std::array<bool, 3> windowed_axes(const std::array<int64_t, 3>& n_axes) {
  return {n_axes[0] > 1, n_axes[1] > 1, n_axes[2] > 1};
}

}  // namespace

FreqSet enumerate_frequencies(int dims, int64_t n) {
  XSTFT_CHECK(dims >= 1 && dims <= 3, "dims must be 1, 2 or 3");
  XSTFT_CHECK(n >= 3 && n % 2 == 1, "window extent must be odd and >= 3");
  FreqSet fs;
  fs.dims = dims;
  fs.n = n;
  fs.units = dims == 3 ? kPoints3d : dims == 2 ? kPoints2d : kPoints1d;
  return fs;
}

StftBasis build_basis(const FreqSet& freqs, const std::array<int64_t, 3>& n_per_axis) {
  int windowed = 0;
  for (int a = 0; a < 3; ++a) {
    const int64_t n = n_per_axis[static_cast<size_t>(a)];
    XSTFT_CHECK(n >= 1 && n % 2 == 1, "window extents must be odd");
    if (n > 1) {
      XSTFT_CHECK(n == freqs.n, "windowed extents must match the frequency set's n");
      ++windowed;
    }
  }
  XSTFT_CHECK(windowed == freqs.dims, "dims must match the number of window axes with extent > 1");
  if (freqs.dims == 2) XSTFT_CHECK(n_per_axis[0] == 1, "2D basis windows the spatial axes");
  if (freqs.dims == 1) XSTFT_CHECK(n_per_axis[1] == 1 && n_per_axis[2] == 1, "1D basis windows the temporal axis");

  StftBasis basis;
  basis.freqs = freqs;
  basis.n_axes = n_per_axis;
  const int K = freqs.K();
  const int64_t vol = basis.window_volume();
  const auto r = basis.radii();
  const UnitCircle circle(freqs.n);

  basis.W = Tensor<double>({2 * K, vol});
  double* w = basis.W.data();
  for (int q = 0; q < K; ++q) {
    const auto units = map_units(freqs.units[static_cast<size_t>(q)], freqs.dims);
    int64_t col = 0;
    for (int64_t dt = -r[0]; dt <= r[0]; ++dt)
      for (int64_t dh = -r[1]; dh <= r[1]; ++dh)
        for (int64_t dw = -r[2]; dw <= r[2]; ++dw, ++col) {
          // Eq. term e^{-j 2 pi v.(x-y)} at y = x + offset equals e^{+j 2 pi v.offset}.
          const int64_t m = units[0] * dt + units[1] * dh + units[2] * dw;
          w[(2 * q) * vol + col] = circle.re(m);
          w[(2 * q + 1) * vol + col] = circle.im(m);
        }
  }

  // Per-axis factor tables; the product over axes reproduces each W entry.
  for (int a = 0; a < 3; ++a) {
    auto& f = basis.factors[static_cast<size_t>(a)];
    f.n = n_per_axis[static_cast<size_t>(a)];
    for (int u = -1; u <= 1; ++u) {
      auto& kern = f.kernel_for_unit[static_cast<size_t>(u + 1)];
      kern.resize(static_cast<size_t>(f.n));
      const int64_t ra = (f.n - 1) / 2;
      for (int64_t d = 0; d < f.n; ++d) {
        const int64_t m = static_cast<int64_t>(u) * (d - ra);
        kern[static_cast<size_t>(d)] = {circle.re(m), circle.im(m)};
      }
    }
    for (const auto& pu : freqs.units) {
      const auto units = map_units(pu, freqs.dims);
      f.used[static_cast<size_t>(units[static_cast<size_t>(a)] + 1)] = true;
    }
  }
  return basis;
}

const std::array<AxisFactors, 3>& factor_separable(const StftBasis& basis) { return basis.factors; }

Tensor<double> recompose_dense(const StftBasis& basis) {
  const int K = basis.freqs.K();
  const int64_t vol = basis.window_volume();
  const auto r = basis.radii();
  Tensor<double> out({2 * K, vol});
  double* o = out.data();
  for (int q = 0; q < K; ++q) {
    const auto units = map_units(basis.freqs.units[static_cast<size_t>(q)], basis.freqs.dims);
    int64_t col = 0;
    for (int64_t dt = -r[0]; dt <= r[0]; ++dt)
      for (int64_t dh = -r[1]; dh <= r[1]; ++dh)
        for (int64_t dw = -r[2]; dw <= r[2]; ++dw, ++col) {
          const std::array<int64_t, 3> off = {dt, dh, dw};
          double re = 1.0, im = 0.0;
          for (int a = 0; a < 3; ++a) {
            const auto& f = basis.factors[static_cast<size_t>(a)];
            const auto& kern = f.kernel_for_unit[static_cast<size_t>(units[static_cast<size_t>(a)] + 1)];
            const auto& v = kern[static_cast<size_t>(off[static_cast<size_t>(a)] + (f.n - 1) / 2)];
            const double nre = re * v[0] - im * v[1];
            im = re * v[1] + im * v[0];
            re = nre;
          }
          o[(2 * q) * vol + col] = re;
          o[(2 * q + 1) * vol + col] = im;
        }
  }
  return out;
}

SeparablePlan make_separable_plan(const FreqSet& freqs, const std::array<int64_t, 3>& n_per_axis) {
  const auto windowed = windowed_axes(n_per_axis);
  std::vector<int> axis_order;  // evaluation order: w, then h, then t
  for (int a = 2; a >= 0; --a)
    if (windowed[static_cast<size_t>(a)]) axis_order.push_back(a);

  SeparablePlan plan;
  plan.point_stage.assign(static_cast<size_t>(freqs.K()), -1);
  std::map<std::vector<int>, int> node_of_key;  // suffix of processed-axis units -> stage index

  for (size_t depth = 0; depth < axis_order.size(); ++depth) {
    const int axis = axis_order[depth];
    const int64_t n = n_per_axis[static_cast<size_t>(axis)];
    for (int p = 0; p < freqs.K(); ++p) {
      const auto units = map_units(freqs.units[static_cast<size_t>(p)], freqs.dims);
      std::vector<int> key, parent_key;
      for (size_t d = 0; d <= depth; ++d) key.push_back(units[static_cast<size_t>(axis_order[d])]);
      for (size_t d = 0; d < depth; ++d) parent_key.push_back(units[static_cast<size_t>(axis_order[d])]);
      if (!node_of_key.contains(key)) {
        PlanStage st;
        st.axis = axis;
        st.unit = units[static_cast<size_t>(axis)];
        st.input = depth == 0 ? -1 : node_of_key.at(parent_key);
        st.in_complex = depth == 0 ? false : plan.stages[static_cast<size_t>(st.input)].out_complex;
        st.out_complex = st.in_complex || st.unit != 0;
        const int64_t mult = (st.in_complex ? 2 : 1) * (st.unit != 0 ? 2 : 1);
        st.macs_per_output = mult * n;
        node_of_key[key] = static_cast<int>(plan.stages.size());
        plan.stages.push_back(st);
      }
      if (depth + 1 == axis_order.size()) plan.point_stage[static_cast<size_t>(p)] = node_of_key.at(key);
    }
  }
  return plan;
}

void write_w_csv(const StftBasis& basis, std::ostream& os) {
  const auto& w = basis.W;
  const int64_t rows = w.extent(0), cols = w.extent(1);
  os.precision(17);
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < cols; ++j) {
      if (j) os << ',';
      os << w.data()[i * cols + j];
    }
    os << '\n';
  }
}

}  // namespace xstft
