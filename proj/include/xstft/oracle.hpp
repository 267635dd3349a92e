#ifndef XSTFT_ORACLE_HPP_
#define XSTFT_ORACLE_HPP_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xstft/rng.hpp"
#include "xstft/stft_kernel.hpp"
#include "xstft/tensor.hpp"

namespace xstft::oracle {

// Slow reference for the depthwise windowed transform: per position, channel
// and frequency point, directly sums f(y) * e^{-j 2 pi v.(x-y)} over the
// zero-padded neighborhood with std::complex arithmetic. Stride 1, output
// [c*2K, t, h, w] with Re/Im interleaved per point. Shares nothing with the
// fast path beyond tensor storage.
Tensor<double> brute_dft(const Tensor<double>& x, const FreqSet& freqs);

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  int64_t coords_skipped = 0;  // non-converged probes (activation kinks)
};

// Central differences against an analytic gradient, coordinate by coordinate
// over `params` (any mutable view into the model or input). `loss` must be a
// pure function of the current parameter values. If max_coords >= 0, a random
// subset of coordinates is probed using `rng`. With skip_kinks, a second
// estimate at step/2 is taken and probes whose finite differences are not
// step-converged (a piecewise-linear kink inside the stencil) are dropped;
// an incorrect analytic gradient stays detectable because its disagreement
// survives step refinement.
GradCheckResult grad_check(const std::function<double()>& loss, std::span<double> params,
                           std::span<const double> analytic, double step = 1e-5,
                           int64_t max_coords = -1, Rng* rng = nullptr, bool skip_kinks = false);

// Directional derivative (loss(p + eps*dir) - loss(p - eps*dir)) / (2 eps),
// for whole-model probes where per-coordinate differencing is too slow.
double directional_derivative(const std::function<double()>& loss, std::span<double> params,
                              std::span<const double> dir, double step = 1e-5);

double rel_err(double analytic, double numeric);

}  // namespace xstft::oracle

#endif  // XSTFT_ORACLE_HPP_
