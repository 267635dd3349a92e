#ifndef XSTFT_TESTS_TEST_UTIL_HPP_
#define XSTFT_TESTS_TEST_UTIL_HPP_

#include <vector>

#include "xstft/layers.hpp"
#include "xstft/oracle.hpp"
#include "xstft/rng.hpp"
#include "xstft/tensor.hpp"

namespace xstft::testutil {

inline Tensor<double> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.values()) v = scale * rng.next_gaussian();
  return t;
}

inline void zero_grads(Layer<double>& layer) {
  layer.visit_params("p", [](const ParamRef<double>& p) {
    if (p.grad) std::fill(p.grad->values().begin(), p.grad->values().end(), 0.0);
  });
}

// Scalar probe loss sum(forward(x) * proj); returns max relative error of the
// analytic input gradient and every trainable parameter gradient against
// central differences.
inline double layer_grad_check(Layer<double>& layer, Tensor<double>& x, Rng& rng,
                               PassMode mode = PassMode::kTrainFrozenStats, double step = 1e-5) {
  Tensor<double> y0 = layer.forward(x, mode);
  Tensor<double> proj = random_tensor(y0.shape(), rng);
  auto loss = [&]() {
    Tensor<double> y = layer.forward(x, mode);
    double acc = 0;
    for (int64_t i = 0; i < y.size(); ++i) acc += y.data()[i] * proj.data()[i];
    return acc;
  };
  zero_grads(layer);
  layer.forward(x, mode);
  Tensor<double> gx = layer.backward(proj);

  double worst = 0;
  auto res = oracle::grad_check(loss, x.values(), gx.values(), step);
  worst = std::max(worst, res.max_rel_err);
  layer.visit_params("p", [&](const ParamRef<double>& p) {
    if (!p.trainable) return;
    auto r = oracle::grad_check(loss, p.value->values(), p.grad->values(), step);
    worst = std::max(worst, r.max_rel_err);
  });
  return worst;
}

// Adjoint identity <J u, v> == <u, J^T v> for the locally linearized layer.
inline double adjoint_gap(Layer<double>& layer, Tensor<double>& x, Rng& rng,
                          PassMode mode = PassMode::kTrainFrozenStats, double step = 1e-6) {
  Tensor<double> y0 = layer.forward(x, mode);
  Tensor<double> u = random_tensor(x.shape(), rng);
  Tensor<double> v = random_tensor(y0.shape(), rng);
  // jvp by central differences through the forward map
  Tensor<double> xp(x.shape()), xm(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    xp.data()[i] = x.data()[i] + step * u.data()[i];
    xm.data()[i] = x.data()[i] - step * u.data()[i];
  }
  Tensor<double> yp = layer.forward(xp, mode);
  Tensor<double> ym = layer.forward(xm, mode);
  double lhs = 0;
  for (int64_t i = 0; i < yp.size(); ++i)
    lhs += (yp.data()[i] - ym.data()[i]) / (2 * step) * v.data()[i];
  zero_grads(layer);
  layer.forward(x, mode);
  Tensor<double> jt_v = layer.backward(v);
  double rhs = 0;
  for (int64_t i = 0; i < x.size(); ++i) rhs += u.data()[i] * jt_v.data()[i];
  return oracle::rel_err(lhs, rhs);
}

}  // namespace xstft::testutil

#endif  // XSTFT_TESTS_TEST_UTIL_HPP_
