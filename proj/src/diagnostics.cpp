// SPDX-License-Identifier: Apache-2.0
#include "lavino/diagnostics.hpp"

#include <cmath>

namespace lavino {

double dot_test_error(LinearOp const &op, std::uint64_t seed)
{
  return dot_test_error(op, [&](VideoTensor const &y) { return op.adjoint(y); }, seed);
}

std::vector<double> materialize(LinearOp const &op)
{
  std::size_t const n = op.input_shape().size();
  std::size_t const m = op.output_shape().size();
  std::vector<double> dense(m * n);
  VideoTensor e(op.input_shape());
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    auto const col = op.apply(e);
    for (std::size_t i = 0; i < m; ++i) {
      dense[j * m + i] = col[i];
    }
    e[j] = 0.0;
  }
  return dense;
}

TVInstance bundled_tv_instance()
{
  Shape const s{5, 8, 8, 1};
  TVInstance inst;
  inst.op = LinearOp::identity(s);
  inst.truth = VideoTensor(s);
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t h = 0; h < s.height; ++h) {
      for (std::size_t w = 0; w < s.width; ++w) {
        inst.truth(t, h, w, 0) = 0.5 + 0.3 * std::sin(0.5 * double(h) + 0.3 * double(w) + 0.4 * double(t));
      }
    }
  }
  inst.y = inst.op.apply(inst.truth);
  axpy(0.02, gaussian_noise(inst.y.shape(), 3), inst.y);
  inst.u = pseudo_inverse_init(inst.op, inst.y);
  axpy(0.02, gaussian_noise(s, 4), inst.u);
  inst.sigma_n = 0.1;
  inst.weights = TVWeights{0.0, 0.0, 0.05};
  inst.delta_eta = 1.0;
  return inst;
}

} // namespace lavino
