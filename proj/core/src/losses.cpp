#include "pvckit/losses.hpp"

#include <cmath>

namespace pvckit {

void LossWeights::validate() const {
  if (lambda_a < 0.0 || lambda_b < 0.0 || lambda_c < 0.0)
    throw ContractError("loss weights must be >= 0");
}

SsimParams SsimParams::from_reference(const Tensor& y, int64_t window) {
  SsimParams p;
  p.window = window;
  double r = 0.0;
  const double* v = y.data();
  for (int64_t i = 0; i < y.size(); ++i) r = std::max(r, v[i]);
  if (r <= 0.0) r = 1.0;
  p.dynamic_range = r;
  p.c1 = (0.01 * r) * (0.01 * r);
  p.c2 = (0.03 * r) * (0.03 * r);
  return p;
}

double imbv(const Volume& v, const TemplateSet& t) {
  if (v.dims != t.dims) throw ShapeError("volume and template dims differ");
  double sum_myo = 0.0, sum_blp = 0.0;
  int64_t n_myo = 0, n_blp = 0;
  for (int64_t i = 0; i < v.size(); ++i) {
    const uint16_t l = t.labels[static_cast<size_t>(i)];
    if (l == static_cast<uint16_t>(Organ::myocardium)) {
      sum_myo += v.data[static_cast<size_t>(i)];
      ++n_myo;
    } else if (l == static_cast<uint16_t>(Organ::blood_pool)) {
      sum_blp += v.data[static_cast<size_t>(i)];
      ++n_blp;
    }
  }
  if (n_myo == 0) throw DegenerateRegionError("empty myocardium region");
  if (n_blp == 0) throw DegenerateRegionError("empty blood-pool region");
  const double mean_blp = sum_blp / static_cast<double>(n_blp);
  if (mean_blp == 0.0) throw DegenerateRegionError("blood-pool mean is zero");
  return (sum_myo / static_cast<double>(n_myo)) / mean_blp;
}

namespace {

void check_batch_pair(const Var& y, const Var& x, const char* op) {
  const Shape& ys = y.shape();
  const Shape& xs = x.shape();
  if (ys != xs)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(ys) + " vs " + shape_str(xs));
  if (ys.size() != 5 || ys[1] != 1)
    throw ShapeError(std::string(op) + ": expected [N,1,D,H,W], got " + shape_str(ys));
}

struct PlaneView {
  Var view;      // [M,1,1,P,Q]
  int64_t p, q;  // in-plane extents
  const char* name;
};

// slice-wise 2-d views of a [N,1,D,H,W] batch along the three orientations
std::array<PlaneView, 3> plane_views(Var v) {
  const Shape s = v.shape();
  const int64_t n = s[0], d = s[2], h = s[3], w = s[4];
  PlaneView transverse{reshape(v, Shape{n * d, 1, 1, h, w}), h, w, "transverse"};
  PlaneView coronal{reshape(permute(v, {0, 1, 3, 2, 4}), Shape{n * h, 1, 1, d, w}), d, w, "coronal"};
  PlaneView sagittal{reshape(permute(v, {0, 1, 4, 2, 3}), Shape{n * w, 1, 1, d, h}), d, h, "sagittal"};
  return {transverse, coronal, sagittal};
}

Var mean_of(const std::vector<Var>& parts) {
  Var acc = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return parts.size() == 1 ? acc : mul_scalar(acc, 1.0 / static_cast<double>(parts.size()));
}

Var ssim_plane(Var yv, Var xv, const SsimParams& p, Tape& tape) {
  const kernels::Conv3dSpec valid{};
  Var box = tape.constant(Tensor::full(Shape{1, 1, 1, p.window, p.window},
                                       1.0 / static_cast<double>(p.window * p.window)));
  Var mu_y = conv3d(yv, box, valid);
  Var mu_x = conv3d(xv, box, valid);
  Var e_yy = conv3d(mul(yv, yv), box, valid);
  Var e_xx = conv3d(mul(xv, xv), box, valid);
  Var e_xy = conv3d(mul(yv, xv), box, valid);
  Var sig_y = sub(e_yy, mul(mu_y, mu_y));
  Var sig_x = sub(e_xx, mul(mu_x, mu_x));
  Var sig_xy = sub(e_xy, mul(mu_y, mu_x));
  Var num = mul(add_scalar(mul_scalar(mul(mu_y, mu_x), 2.0), p.c1),
                add_scalar(mul_scalar(sig_xy, 2.0), p.c2));
  Var den = mul(add_scalar(add(mul(mu_y, mu_y), mul(mu_x, mu_x)), p.c1),
                add_scalar(add(sig_y, sig_x), p.c2));
  return mean(div(num, den));
}

const Tensor& sobel_kx() {
  static const Tensor k(Shape{1, 1, 1, 3, 3},
                        {-1, 0, 1, -2, 0, 2, -1, 0, 1});
  return k;
}
const Tensor& sobel_ky() {
  static const Tensor k(Shape{1, 1, 1, 3, 3},
                        {-1, -2, -1, 0, 0, 0, 1, 2, 1});
  return k;
}

}  // namespace

Var mae_loss(Var y, Var x) {
  check_batch_pair(y, x, "mae_loss");
  return mean(abs(sub(y, x)));
}

Var ssim_3plane(Var y, Var x, const SsimParams& p) {
  check_batch_pair(y, x, "ssim_3plane");
  Tape& tape = *y.tape();
  auto yp = plane_views(y);
  auto xp = plane_views(x);
  std::vector<Var> planes;
  for (size_t o = 0; o < 3; ++o) {
    if (yp[o].p < p.window || yp[o].q < p.window) {
      if (p.on_warning)
        p.on_warning(std::string("ssim: skipping ") + yp[o].name + " plane (slice " +
                     std::to_string(yp[o].p) + "x" + std::to_string(yp[o].q) +
                     " smaller than the window)");
      continue;
    }
    planes.push_back(ssim_plane(yp[o].view, xp[o].view, p, tape));
  }
  if (planes.empty())
    throw WindowError("every plane orientation is smaller than the SSIM window (" +
                      std::to_string(p.window) + ")");
  return mean_of(planes);
}

Var ssim_loss(Var y, Var x, const SsimParams& p) {
  return add_scalar(mul_scalar(ssim_3plane(y, x, p), -1.0), 1.0);
}

Var sobel_loss(Var y, Var x) {
  check_batch_pair(y, x, "sobel_loss");
  Tape& tape = *y.tape();
  Var kx = tape.constant(sobel_kx());
  Var ky = tape.constant(sobel_ky());
  const kernels::Conv3dSpec valid{};
  const std::vector<int64_t> pad1{0, 0, 0, 1, 1};
  auto yp = plane_views(y);
  auto xp = plane_views(x);
  std::vector<Var> planes;
  for (size_t o = 0; o < 3; ++o) {
    Var ypad = pad_reflect(yp[o].view, pad1, pad1);
    Var xpad = pad_reflect(xp[o].view, pad1, pad1);
    Var dx = mean(abs(sub(conv3d(ypad, kx, valid), conv3d(xpad, kx, valid))));
    Var dy = mean(abs(sub(conv3d(ypad, ky, valid), conv3d(xpad, ky, valid))));
    planes.push_back(mul_scalar(add(dx, dy), 0.5));
  }
  return mean_of(planes);
}

namespace {

Tensor organ_mask(const TemplateSet& t, Organ o, int64_t& count) {
  Tensor m(Shape{1, 1, t.dims[0], t.dims[1], t.dims[2]});
  double* p = m.data();
  count = 0;
  for (int64_t i = 0; i < t.size(); ++i) {
    if (t.labels[static_cast<size_t>(i)] == static_cast<uint16_t>(o)) {
      p[i] = 1.0;
      ++count;
    }
  }
  return m;
}

// mean of one batch item over a constant mask
Var masked_mean(Var item, Var mask, int64_t count) {
  return mul_scalar(sum(mul(item, mask)), 1.0 / static_cast<double>(count));
}

}  // namespace

Var imbv_loss(Var y, Var x, std::span<const TemplateSet> templates) {
  check_batch_pair(y, x, "imbv_loss");
  const Shape& s = y.shape();
  const int64_t batch = s[0];
  if (static_cast<int64_t>(templates.size()) != batch)
    throw ShapeError("imbv_loss: need one template set per batch item");
  Tape& tape = *y.tape();
  Shape item_shape{1, 1, s[2], s[3], s[4]};
  std::vector<Var> diffs;
  for (int64_t i = 0; i < batch; ++i) {
    const TemplateSet& t = templates[static_cast<size_t>(i)];
    if (t.dims[0] != s[2] || t.dims[1] != s[3] || t.dims[2] != s[4])
      throw ShapeError("imbv_loss: template dims do not match batch item " + std::to_string(i));
    int64_t n_myo = 0, n_blp = 0;
    Var m_myo = tape.constant(organ_mask(t, Organ::myocardium, n_myo));
    Var m_blp = tape.constant(organ_mask(t, Organ::blood_pool, n_blp));
    if (n_myo == 0) throw DegenerateRegionError("empty myocardium region in batch item " + std::to_string(i));
    if (n_blp == 0) throw DegenerateRegionError("empty blood-pool region in batch item " + std::to_string(i));
    Var yi = batch == 1 ? y : slice(y, {i, 0, 0, 0, 0}, item_shape);
    Var xi = batch == 1 ? x : slice(x, {i, 0, 0, 0, 0}, item_shape);
    Var y_blp = masked_mean(yi, m_blp, n_blp);
    Var x_blp = masked_mean(xi, m_blp, n_blp);
    if (y_blp.value().value() == 0.0 || x_blp.value().value() == 0.0)
      throw DegenerateRegionError("blood-pool mean is zero in batch item " + std::to_string(i));
    Var imbv_y = div(masked_mean(yi, m_myo, n_myo), y_blp);
    Var imbv_x = div(masked_mean(xi, m_myo, n_myo), x_blp);
    diffs.push_back(abs(sub(imbv_x, imbv_y)));
  }
  return mean_of(diffs);
}

CompositeLoss composite_loss(Var y, Var x, std::span<const TemplateSet> templates,
                             const LossWeights& w, const SsimParams& ssim_params) {
  w.validate();
  CompositeLoss out;
  out.mae = mae_loss(y, x);
  out.total = out.mae;
  if (w.lambda_a > 0.0) {
    out.ssim = ssim_loss(y, x, ssim_params);
    out.total = add(out.total, mul_scalar(out.ssim, w.lambda_a));
  }
  if (w.lambda_b > 0.0) {
    out.sobel = sobel_loss(y, x);
    out.total = add(out.total, mul_scalar(out.sobel, w.lambda_b));
  }
  if (w.lambda_c > 0.0) {
    out.imbv = imbv_loss(y, x, templates);
    out.total = add(out.total, mul_scalar(out.imbv, w.lambda_c));
  }
  return out;
}

}  // namespace pvckit
