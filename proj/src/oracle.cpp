#include "xstft/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace xstft::oracle {

Tensor<double> brute_dft(const Tensor<double>& x, const FreqSet& freqs) {
  XSTFT_CHECK_SHAPE(x.rank() == 4, "brute_dft expects [c,t,h,w]");
  const int64_t c = x.extent(0), t = x.extent(1), h = x.extent(2), w = x.extent(3);
  const int64_t r = (freqs.n - 1) / 2;
  const int K = freqs.K();
  // Window coverage by variant: 3 -> (t,h,w), 2 -> (h,w), 1 -> (t).
  const int64_t rt = freqs.dims == 3 || freqs.dims == 1 ? r : 0;
  const int64_t rh = freqs.dims >= 2 ? r : 0;
  const int64_t rw = freqs.dims >= 2 ? r : 0;

  Tensor<double> y({c * 2 * K, t, h, w});
  const std::complex<double> minus_j(0.0, -1.0);
  const double two_pi = 2.0 * std::acos(-1.0);
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t pt = 0; pt < t; ++pt)
      for (int64_t ph = 0; ph < h; ++ph)
        for (int64_t pw = 0; pw < w; ++pw)
          for (int q = 0; q < K; ++q) {
            // Frequency components on (t,h,w); unused axes carry 0.
            double vt = 0, vh = 0, vw = 0;
            if (freqs.dims == 3) {
              vt = freqs.freq(q, 0);
              vh = freqs.freq(q, 1);
              vw = freqs.freq(q, 2);
            } else if (freqs.dims == 2) {
              vh = freqs.freq(q, 0);
              vw = freqs.freq(q, 1);
            } else {
              vt = freqs.freq(q, 0);
            }
            std::complex<double> acc(0.0, 0.0);
            for (int64_t dt = -rt; dt <= rt; ++dt)
              for (int64_t dh = -rh; dh <= rh; ++dh)
                for (int64_t dw = -rw; dw <= rw; ++dw) {
                  const int64_t yt = pt + dt, yh = ph + dh, yw = pw + dw;
                  if (yt < 0 || yt >= t || yh < 0 || yh >= h || yw < 0 || yw >= w) continue;  // zero pad
                  const double f = x.data()[((ci * t + yt) * h + yh) * w + yw];
                  // x - y = -offset
                  const double phase = two_pi * (vt * static_cast<double>(-dt) + vh * static_cast<double>(-dh) +
                                                 vw * static_cast<double>(-dw));
                  acc += f * std::exp(minus_j * phase);
                }
            y.data()[(((ci * 2 * K + 2 * q) * t + pt) * h + ph) * w + pw] = acc.real();
            y.data()[(((ci * 2 * K + 2 * q + 1) * t + pt) * h + ph) * w + pw] = acc.imag();
          }
  return y;
}

double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  return std::fabs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<double()>& loss, std::span<double> params,
                           std::span<const double> analytic, double step, int64_t max_coords, Rng* rng,
                           bool skip_kinks) {
  XSTFT_CHECK(params.size() == analytic.size(), "analytic gradient length mismatch");
  GradCheckResult res;
  std::vector<int64_t> coords;
  const int64_t n = static_cast<int64_t>(params.size());
  if (max_coords >= 0 && max_coords < n) {
    XSTFT_CHECK(rng != nullptr, "coordinate sampling needs an rng");
    for (int64_t i = 0; i < max_coords; ++i) coords.push_back(static_cast<int64_t>(rng->next_below(static_cast<uint64_t>(n))));
  } else {
    coords.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
  }
  const double base = skip_kinks ? loss() : 0.0;
  for (int64_t i : coords) {
    const double saved = params[static_cast<size_t>(i)];
    params[static_cast<size_t>(i)] = saved + step;
    const double up = loss();
    params[static_cast<size_t>(i)] = saved - step;
    const double down = loss();
    params[static_cast<size_t>(i)] = saved;
    const double numeric = (up - down) / (2.0 * step);
    if (skip_kinks) {
      // A kink anywhere inside the stencil splits the one-sided slopes.
      const double dplus = (up - base) / step;
      const double dminus = (base - down) / step;
      if (rel_err(dplus, dminus) > 1e-3) {
        ++res.coords_skipped;
        continue;
      }
    }
    res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic[static_cast<size_t>(i)], numeric));
    ++res.coords_checked;
  }
  return res;
}

double directional_derivative(const std::function<double()>& loss, std::span<double> params,
                              std::span<const double> dir, double step) {
  XSTFT_CHECK(params.size() == dir.size(), "direction length mismatch");
  std::vector<double> saved(params.begin(), params.end());
  for (size_t i = 0; i < params.size(); ++i) params[i] = saved[i] + step * dir[i];
  const double up = loss();
  for (size_t i = 0; i < params.size(); ++i) params[i] = saved[i] - step * dir[i];
  const double down = loss();
  std::copy(saved.begin(), saved.end(), params.begin());
  return (up - down) / (2.0 * step);
}

}  // namespace xstft::oracle
