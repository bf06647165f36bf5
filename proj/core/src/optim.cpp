#include "pvckit/optim.hpp"

#include <cmath>

namespace pvckit {

Tensor adam_update(const Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, int64_t step,
                   const AdamConfig& cfg) {
  if (param.shape() != grad.shape())
    throw ShapeError("adam: grad shape " + shape_str(grad.shape()) + " does not match parameter " +
                     shape_str(param.shape()));
  if (!m.defined()) m = Tensor(param.shape());
  if (!v.defined()) v = Tensor(param.shape());
  if (m.shape() != param.shape() || v.shape() != param.shape())
    throw ShapeError("adam: moment shape does not match parameter");

  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));

  Tensor out(param.shape());
  const double* p = param.data();
  const double* g = grad.data();
  double* mp = m.data();
  double* vp = v.data();
  double* op = out.data();
  const int64_t n = param.size();
  for (int64_t i = 0; i < n; ++i) {
    mp[i] = cfg.beta1 * mp[i] + (1.0 - cfg.beta1) * g[i];
    vp[i] = cfg.beta2 * vp[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = mp[i] / bc1;
    const double vhat = vp[i] / bc2;
    op[i] = p[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  return out;
}

Tensor xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  double* p = t.data();
  const int64_t n = t.size();
  for (int64_t i = 0; i < n; ++i) p[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor xavier_conv_kernel(const Shape& kernel_shape, Rng& rng) {
  if (kernel_shape.size() != 5) throw ShapeError("conv kernel must be 5-d");
  const int64_t spatial = kernel_shape[2] * kernel_shape[3] * kernel_shape[4];
  return xavier_uniform(kernel_shape, kernel_shape[1] * spatial, kernel_shape[0] * spatial, rng);
}

Tensor xavier_fc(int64_t in, int64_t out, Rng& rng) {
  return xavier_uniform(Shape{in, out}, in, out, rng);
}

}  // namespace pvckit
