#pragma once

#include <array>

#include "pvckit/tensor.hpp"

// Plain (non-differentiable) array kernels. The autodiff layer composes these
// into recorded ops; they are also usable directly for gradient-free work.
//
// Convolution convention: cross-correlation, no kernel flip. Within one
// output element the summation order is fixed (input channel, then kd, kh,
// kw), so results are bit-identical across runs and thread counts.
namespace pvckit::kernels {

void set_num_threads(int n);  // 0 = library default
int num_threads();

struct Conv3dSpec {
  std::array<int64_t, 3> pad{0, 0, 0};
  std::array<int64_t, 3> stride{1, 1, 1};
};

// x [N,Cin,D,H,W], k [Cout,Cin,kd,kh,kw], bias [Cout] or null
Shape conv3d_out_shape(const Shape& x, const Shape& k, const Conv3dSpec& s);
Tensor conv3d(const Tensor& x, const Tensor& k, const Tensor* bias, const Conv3dSpec& s);
Tensor conv3d_grad_input(const Tensor& gy, const Tensor& k, const Conv3dSpec& s, const Shape& x_shape);
Tensor conv3d_grad_kernel(const Tensor& gy, const Tensor& x, const Conv3dSpec& s, const Shape& k_shape);
Tensor conv3d_grad_bias(const Tensor& gy);

// x [N,Ca,D,H,W], k [Ca,Cb,kd,kh,kw] -> [N,Cb,D',H',W'] with the inverted
// shape map D' = (D-1)*stride - 2*pad + kd; equals the gradient of conv3d
// w.r.t. its input applied to x.
Shape conv3d_transpose_out_shape(const Shape& x, const Shape& k, const Conv3dSpec& s);
Tensor conv3d_transpose(const Tensor& x, const Tensor& k, const Tensor* bias, const Conv3dSpec& s);

// data movement
Tensor pad_zero(const Tensor& x, const std::vector<int64_t>& lo, const std::vector<int64_t>& hi);
Tensor pad_reflect(const Tensor& x, const std::vector<int64_t>& lo, const std::vector<int64_t>& hi);
// scatter-add adjoint of pad_reflect (folds reflected borders back inward)
Tensor pad_reflect_fold(const Tensor& g, const std::vector<int64_t>& lo, const std::vector<int64_t>& hi);
Tensor crop(const Tensor& x, const std::vector<int64_t>& start, const Shape& sizes);
// embeds g into a zero tensor of the given shape at `start` (adjoint of crop)
Tensor uncrop(const Tensor& g, const std::vector<int64_t>& start, const Shape& full);
Tensor permute(const Tensor& x, const std::vector<int64_t>& perm);
Tensor concat(const std::vector<Tensor>& parts, int64_t axis);
Tensor repeat_channels(const Tensor& x, int64_t times);      // [N,C,...] -> [N,C*times,...]
Tensor sum_channel_repeats(const Tensor& g, int64_t times);  // adjoint of repeat_channels

Tensor global_avg_pool(const Tensor& x);  // [N,C,D,H,W] -> [N,C,1,1,1]

// y = x*w + b; x [M,K], w [K,N], b [N] or null
Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor* b);

}  // namespace pvckit::kernels
