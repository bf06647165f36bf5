#pragma once

#include "pvckit/rng.hpp"
#include "pvckit/tensor.hpp"

namespace pvckit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update of one parameter tensor. `step` is 1-based and
// already incremented for this update. Moments are updated in place; the
// returned tensor is the new parameter value.
Tensor adam_update(const Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, int64_t step,
                   const AdamConfig& cfg);

// Uniform in +-sqrt(6/(fan_in+fan_out)).
Tensor xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng);

// Kernel [A,B,kd,kh,kw]; fan counts use input/output channels times the
// spatial size, independent of the conv/transpose layout.
Tensor xavier_conv_kernel(const Shape& kernel_shape, Rng& rng);

Tensor xavier_fc(int64_t in, int64_t out, Rng& rng);  // [in,out]

}  // namespace pvckit
