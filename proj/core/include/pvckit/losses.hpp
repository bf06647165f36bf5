#pragma once

#include <functional>
#include <span>
#include <string>

#include "pvckit/autodiff.hpp"
#include "pvckit/volume.hpp"

namespace pvckit {

struct LossWeights {
  double lambda_a = 0.8;  // SSIM
  double lambda_b = 0.1;  // Sobel
  double lambda_c = 0.1;  // IMBV
  void validate() const;
};

struct SsimParams {
  int64_t window = 11;
  double dynamic_range = 1.0;
  double c1 = 1e-4;
  double c2 = 9e-4;
  std::function<void(const std::string&)> on_warning;  // skipped-plane notices

  // R = max of the reference batch (1 for an all-zero reference);
  // C1 = (0.01 R)^2, C2 = (0.03 R)^2
  static SsimParams from_reference(const Tensor& y, int64_t window = 11);
};

// mean activity over myocardium divided by mean over the LV blood pool
double imbv(const Volume& v, const TemplateSet& t);

// (1/(N*D*H*W)) sum |y - x| over [N,1,D,H,W] batches
Var mae_loss(Var y, Var x);

// Mean local SSIM with a uniform window, computed per 2-d slice along the
// transverse, coronal and sagittal orientations and averaged with equal
// weight. Slices thinner than the window on some orientation are skipped
// (with a warning); if no orientation fits, throws WindowError.
Var ssim_3plane(Var y, Var x, const SsimParams& p);
Var ssim_loss(Var y, Var x, const SsimParams& p);  // 1 - ssim_3plane

// MAE between the two Sobel gradient maps of x and y, slice-wise along all
// three plane orientations (reflective border padding), averaged.
Var sobel_loss(Var y, Var x);

// per-batch-item |IMBV(x_i) - IMBV(y_i)|, averaged; labels are constants
Var imbv_loss(Var y, Var x, std::span<const TemplateSet> templates);

struct CompositeLoss {
  Var total;
  Var mae, ssim, sobel, imbv;  // a component is undefined when its weight is 0
};

// mae + lambda_a*(1-ssim) + lambda_b*sobel + lambda_c*imbv; zero-weight
// components are skipped entirely (lambda_c = 0 is the no-BV objective)
CompositeLoss composite_loss(Var y, Var x, std::span<const TemplateSet> templates,
                             const LossWeights& w, const SsimParams& ssim_params);

}  // namespace pvckit
