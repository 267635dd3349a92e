#ifndef XSTFT_STFT_KERNEL_HPP_
#define XSTFT_STFT_KERNEL_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "xstft/tensor.hpp"

namespace xstft {

// Ordered low-frequency points of the windowed transform. Entries are stored
// as integer multiples of k = 1/n ({-1, 0, +1} per axis) so the published
// point list stays exact; dims selects the spatio-temporal (3), spatial (2)
// or temporal (1) variant. The zero point and one of each conjugate pair are
// excluded.
struct FreqSet {
  int dims = 3;
  int64_t n = 3;                              // window extent, odd
  std::vector<std::vector<int>> units;        // K entries of length dims

  int K() const { return static_cast<int>(units.size()); }
  double k() const { return 1.0 / static_cast<double>(n); }
  // Frequency value of point i along axis a (cycles per sample).
  double freq(int i, int a) const { return units[static_cast<size_t>(i)][static_cast<size_t>(a)] * k(); }
};

FreqSet enumerate_frequencies(int dims, int64_t n);

// Complex 1D window factors for one axis: kernel_for_unit[u+1][d] holds
// e^{+j*2*pi*(u*k)*(d-r)} as (re, im) -- the transform term at neighborhood
// offset d-r along this axis. Products over axes rebuild dense W entries.
struct AxisFactors {
  int64_t n = 1;
  std::array<std::vector<std::array<double, 2>>, 3> kernel_for_unit;  // index by unit+1
  std::array<bool, 3> used{false, false, false};
};

// Real transformation matrix of the windowed transform plus its per-axis
// factorization. Rows alternate Re/Im per frequency point; columns follow the
// neighborhood offset ordering (time-major, each axis -r..+r).
struct StftBasis {
  FreqSet freqs;
  std::array<int64_t, 3> n_axes{1, 1, 1};  // (n_t, n_h, n_w); 1 where not windowed
  Tensor<double> W;                        // [2K, n_t*n_h*n_w]
  std::array<AxisFactors, 3> factors;      // indexed t,h,w

  int64_t window_volume() const { return n_axes[0] * n_axes[1] * n_axes[2]; }
  std::array<int64_t, 3> radii() const {
    return {(n_axes[0] - 1) / 2, (n_axes[1] - 1) / 2, (n_axes[2] - 1) / 2};
  }
};

StftBasis build_basis(const FreqSet& freqs, const std::array<int64_t, 3>& n_per_axis);

// The per-axis factor tables of a basis (the separable form of W).
const std::array<AxisFactors, 3>& factor_separable(const StftBasis& basis);

// Rebuilds the dense W from the separable factors; used to cross-check the
// factorization against the directly constructed matrix.
Tensor<double> recompose_dense(const StftBasis& basis);

// One 1D convolution of the separable evaluation cascade. Nodes are produced
// in stage order; `input` is the producing stage index of the input map, or
// -1 for the raw (real) input.
struct PlanStage {
  int axis = 0;        // 0=t, 1=h, 2=w
  int input = -1;
  int unit = 0;        // per-axis frequency as a multiple of k
  bool in_complex = false;
  bool out_complex = false;
  int64_t macs_per_output = 0;  // real multiply-accumulates per output element
};

struct SeparablePlan {
  std::vector<PlanStage> stages;
  std::vector<int> point_stage;  // for each frequency point, the final stage index

  int64_t total_macs_per_position() const {
    int64_t m = 0;
    for (const auto& s : stages) m += s.macs_per_output;
    return m;
  }
};

// Evaluation order runs the fastest-varying axis first (w, then h, then t)
// and shares every common per-axis prefix between frequency points.
SeparablePlan make_separable_plan(const FreqSet& freqs, const std::array<int64_t, 3>& n_per_axis);

// Row-major CSV with 17 significant digits, one row of W per line.
void write_w_csv(const StftBasis& basis, std::ostream& os);

}  // namespace xstft

#endif  // XSTFT_STFT_KERNEL_HPP_
