#include "pvckit/kernels.hpp"

#include <algorithm>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pvckit::kernels {

namespace {

int g_threads = 0;

struct Dims5 {
  int64_t n, c, d, h, w;
};

Dims5 dims5(const Shape& s, const char* what) {
  if (s.size() != 5)
    throw ShapeError(std::string(what) + " must be 5-d [N,C,D,H,W], got " + shape_str(s));
  return {s[0], s[1], s[2], s[3], s[4]};
}

void check_conv_args(const Shape& xs, const Shape& ks, const Tensor* bias, const Conv3dSpec& s,
                     bool transpose) {
  const Dims5 x = dims5(xs, transpose ? "transposed-conv input" : "conv input");
  if (ks.size() != 5) throw ShapeError("kernel must be 5-d, got " + shape_str(ks));
  const int64_t k_in = transpose ? ks[0] : ks[1];
  const int64_t k_out = transpose ? ks[1] : ks[0];
  if (x.c != k_in)
    throw ShapeError("input channel axis: input has " + std::to_string(x.c) +
                     " channels but kernel expects " + std::to_string(k_in));
  if (bias && bias->size() != k_out)
    throw ShapeError("bias axis: bias length " + std::to_string(bias->size()) +
                     " does not match output channels " + std::to_string(k_out));
  static const char* axis_name[3] = {"D", "H", "W"};
  for (int a = 0; a < 3; ++a) {
    if (s.stride[a] < 1) throw ShapeError(std::string("stride on axis ") + axis_name[a] + " must be >= 1");
    if (s.pad[a] < 0) throw ShapeError(std::string("padding on axis ") + axis_name[a] + " must be >= 0");
    const int64_t ext = transpose ? 1 : (&x.d)[a] + 2 * s.pad[a];
    if (!transpose && ks[static_cast<size_t>(2 + a)] > ext)
      throw ShapeError(std::string("kernel axis ") + axis_name[a] + " (" +
                       std::to_string(ks[static_cast<size_t>(2 + a)]) + ") exceeds padded input (" +
                       std::to_string(ext) + ")");
  }
}

// fixed spatial strides of a 5-d tensor
struct Strides5 {
  int64_t n, c, d, h;
};
Strides5 strides5(const Dims5& d) { return {d.c * d.d * d.h * d.w, d.d * d.h * d.w, d.h * d.w, d.w}; }

// valid cross-correlation, stride 1, input already padded
void conv_valid_s1(const double* xp, const Dims5& xd, const double* kp, int64_t co_n, int64_t ci_n,
                   int64_t kd, int64_t kh, int64_t kw, double* out, const Dims5& od) {
  const Strides5 xs = strides5(xd);
  const Strides5 os = strides5(od);
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (int64_t n = 0; n < od.n; ++n) {
    for (int64_t co = 0; co < co_n; ++co) {
      double* oc = out + n * os.n + co * os.c;
      for (int64_t ci = 0; ci < ci_n; ++ci) {
        const double* xc = xp + n * xs.n + ci * xs.c;
        const double* kc = kp + (co * ci_n + ci) * kd * kh * kw;
        for (int64_t zd = 0; zd < kd; ++zd)
          for (int64_t zh = 0; zh < kh; ++zh)
            for (int64_t zw = 0; zw < kw; ++zw) {
              const double kv = kc[(zd * kh + zh) * kw + zw];
              if (kv == 0.0) continue;
              for (int64_t p = 0; p < od.d; ++p)
                for (int64_t q = 0; q < od.h; ++q) {
                  const double* xrow = xc + (p + zd) * xs.d + (q + zh) * xs.h + zw;
                  double* orow = oc + p * os.d + q * os.h;
                  for (int64_t r = 0; r < od.w; ++r) orow[r] += kv * xrow[r];
                }
            }
      }
    }
  }
}

// generic strided gather (used when any stride > 1)
void conv_strided(const double* xp, const Dims5& xd, const double* kp, int64_t co_n, int64_t ci_n,
                  int64_t kd, int64_t kh, int64_t kw, const Conv3dSpec& s, double* out,
                  const Dims5& od) {
  const Strides5 xs = strides5(xd);
  const Strides5 os = strides5(od);
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (int64_t n = 0; n < od.n; ++n) {
    for (int64_t co = 0; co < co_n; ++co) {
      for (int64_t p = 0; p < od.d; ++p)
        for (int64_t q = 0; q < od.h; ++q)
          for (int64_t r = 0; r < od.w; ++r) {
            double acc = 0.0;
            for (int64_t ci = 0; ci < ci_n; ++ci) {
              const double* xc = xp + n * xs.n + ci * xs.c;
              const double* kc = kp + (co * ci_n + ci) * kd * kh * kw;
              for (int64_t zd = 0; zd < kd; ++zd)
                for (int64_t zh = 0; zh < kh; ++zh)
                  for (int64_t zw = 0; zw < kw; ++zw)
                    acc += kc[(zd * kh + zh) * kw + zw] *
                           xc[(p * s.stride[0] + zd) * xs.d + (q * s.stride[1] + zh) * xs.h +
                              r * s.stride[2] + zw];
            }
            out[n * os.n + co * os.c + p * os.d + q * os.h + r] = acc;
          }
    }
  }
}

void add_bias(Tensor& y, const Tensor& bias) {
  const Dims5 yd = dims5(y.shape(), "conv output");
  const int64_t plane = yd.d * yd.h * yd.w;
  double* out = y.data();
  const double* b = bias.data();
  for (int64_t n = 0; n < yd.n; ++n)
    for (int64_t c = 0; c < yd.c; ++c) {
      double* p = out + (n * yd.c + c) * plane;
      const double bv = b[c];
      for (int64_t i = 0; i < plane; ++i) p[i] += bv;
    }
}

bool any_pad(const Conv3dSpec& s) { return s.pad[0] | s.pad[1] | s.pad[2]; }
bool unit_stride(const Conv3dSpec& s) { return s.stride[0] == 1 && s.stride[1] == 1 && s.stride[2] == 1; }

Tensor pad_spatial(const Tensor& x, const std::array<int64_t, 3>& lo, const std::array<int64_t, 3>& hi) {
  return pad_zero(x, {0, 0, lo[0], lo[1], lo[2]}, {0, 0, hi[0], hi[1], hi[2]});
}

// [A,B,kd,kh,kw] -> [B,A,kd',kh',kw'] with all spatial axes reversed
Tensor flip_swap_kernel(const Tensor& k) {
  const Shape& s = k.shape();
  const int64_t a_n = s[0], b_n = s[1], kd = s[2], kh = s[3], kw = s[4];
  Tensor out(Shape{b_n, a_n, kd, kh, kw});
  const double* src = k.data();
  double* dst = out.data();
  for (int64_t a = 0; a < a_n; ++a)
    for (int64_t b = 0; b < b_n; ++b)
      for (int64_t zd = 0; zd < kd; ++zd)
        for (int64_t zh = 0; zh < kh; ++zh)
          for (int64_t zw = 0; zw < kw; ++zw)
            dst[((((b * a_n) + a) * kd + (kd - 1 - zd)) * kh + (kh - 1 - zh)) * kw + (kw - 1 - zw)] =
                src[(((a * b_n) + b) * kd + zd) * kh * kw + zh * kw + zw];
  return out;
}

}  // namespace

void set_num_threads(int n) {
  g_threads = n;
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

int num_threads() {
#ifdef _OPENMP
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

Shape conv3d_out_shape(const Shape& xs, const Shape& ks, const Conv3dSpec& s) {
  const Dims5 x = dims5(xs, "conv input");
  if (ks.size() != 5) throw ShapeError("kernel must be 5-d, got " + shape_str(ks));
  Shape out{x.n, ks[0], 0, 0, 0};
  static const char* axis_name[3] = {"D", "H", "W"};
  for (int a = 0; a < 3; ++a) {
    const int64_t e = ((&x.d)[a] + 2 * s.pad[a] - ks[static_cast<size_t>(2 + a)]) / s.stride[a] + 1;
    if (e < 1)
      throw ShapeError(std::string("conv output axis ") + axis_name[a] + " would be empty");
    out[static_cast<size_t>(2 + a)] = e;
  }
  return out;
}

Shape conv3d_transpose_out_shape(const Shape& xs, const Shape& ks, const Conv3dSpec& s) {
  const Dims5 x = dims5(xs, "transposed-conv input");
  if (ks.size() != 5) throw ShapeError("kernel must be 5-d, got " + shape_str(ks));
  Shape out{x.n, ks[1], 0, 0, 0};
  static const char* axis_name[3] = {"D", "H", "W"};
  for (int a = 0; a < 3; ++a) {
    const int64_t e = ((&x.d)[a] - 1) * s.stride[a] + ks[static_cast<size_t>(2 + a)] - 2 * s.pad[a];
    if (e < 1)
      throw ShapeError(std::string("transposed-conv output axis ") + axis_name[a] + " would be empty");
    out[static_cast<size_t>(2 + a)] = e;
  }
  return out;
}

Tensor conv3d(const Tensor& x, const Tensor& k, const Tensor* bias, const Conv3dSpec& s) {
  check_conv_args(x.shape(), k.shape(), bias, s, false);
  const Shape os = conv3d_out_shape(x.shape(), k.shape(), s);
  Tensor y(os);
  const Tensor xp = any_pad(s) ? pad_spatial(x, s.pad, s.pad) : x;
  const Dims5 xd = dims5(xp.shape(), "conv input");
  const Dims5 od = dims5(os, "conv output");
  const Shape& ks = k.shape();
  if (unit_stride(s))
    conv_valid_s1(xp.data(), xd, k.data(), ks[0], ks[1], ks[2], ks[3], ks[4], y.data(), od);
  else {
    Conv3dSpec sv = s;
    sv.pad = {0, 0, 0};
    conv_strided(xp.data(), xd, k.data(), ks[0], ks[1], ks[2], ks[3], ks[4], sv, y.data(), od);
  }
  if (bias) add_bias(y, *bias);
  return y;
}

Tensor conv3d_grad_input(const Tensor& gy, const Tensor& k, const Conv3dSpec& s, const Shape& x_shape) {
  const Dims5 xd = dims5(x_shape, "conv input");
  const Shape& ks = k.shape();
  if (gy.shape() != conv3d_out_shape(x_shape, ks, s))
    throw ShapeError("grad shape " + shape_str(gy.shape()) + " does not match conv output of " +
                     shape_str(x_shape));
  if (unit_stride(s)) {
    // full correlation with the flipped, channel-swapped kernel
    const std::array<int64_t, 3> lo{ks[2] - 1 - s.pad[0], ks[3] - 1 - s.pad[1], ks[4] - 1 - s.pad[2]};
    Tensor gyp = pad_spatial(gy, lo, lo);
    const Tensor kf = flip_swap_kernel(k);
    Tensor gx(x_shape);
    conv_valid_s1(gyp.data(), dims5(gyp.shape(), "g"), kf.data(), ks[1], ks[0], ks[2], ks[3], ks[4],
                  gx.data(), xd);
    return gx;
  }
  // strided gather; accumulation order fixed per input element
  Tensor gx(x_shape);
  const Dims5 gd = dims5(gy.shape(), "grad");
  const Strides5 gs = strides5(gd);
  const Strides5 xs = strides5(xd);
  const double* gp = gy.data();
  const double* kp = k.data();
  double* out = gx.data();
  const int64_t co_n = ks[0], ci_n = ks[1], kd = ks[2], kh = ks[3], kw = ks[4];
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (int64_t n = 0; n < xd.n; ++n)
    for (int64_t ci = 0; ci < ci_n; ++ci)
      for (int64_t id = 0; id < xd.d; ++id)
        for (int64_t ih = 0; ih < xd.h; ++ih)
          for (int64_t iw = 0; iw < xd.w; ++iw) {
            double acc = 0.0;
            for (int64_t co = 0; co < co_n; ++co) {
              const double* kc = kp + (co * ci_n + ci) * kd * kh * kw;
              for (int64_t zd = 0; zd < kd; ++zd) {
                const int64_t td = id + s.pad[0] - zd;
                if (td < 0 || td % s.stride[0]) continue;
                const int64_t p = td / s.stride[0];
                if (p >= gd.d) continue;
                for (int64_t zh = 0; zh < kh; ++zh) {
                  const int64_t th = ih + s.pad[1] - zh;
                  if (th < 0 || th % s.stride[1]) continue;
                  const int64_t q = th / s.stride[1];
                  if (q >= gd.h) continue;
                  for (int64_t zw = 0; zw < kw; ++zw) {
                    const int64_t tw = iw + s.pad[2] - zw;
                    if (tw < 0 || tw % s.stride[2]) continue;
                    const int64_t r = tw / s.stride[2];
                    if (r >= gd.w) continue;
                    acc += kc[(zd * kh + zh) * kw + zw] * gp[n * gs.n + co * gs.c + p * gs.d + q * gs.h + r];
                  }
                }
              }
            }
            out[n * xs.n + ci * xs.c + id * xs.d + ih * xs.h + iw] = acc;
          }
  return gx;
}

Tensor conv3d_grad_kernel(const Tensor& gy, const Tensor& x, const Conv3dSpec& s, const Shape& k_shape) {
  if (gy.shape() != conv3d_out_shape(x.shape(), k_shape, s))
    throw ShapeError("grad shape " + shape_str(gy.shape()) + " does not match conv output");
  const Tensor xp = any_pad(s) ? pad_spatial(x, s.pad, s.pad) : x;
  const Dims5 xd = dims5(xp.shape(), "conv input");
  const Dims5 gd = dims5(gy.shape(), "grad");
  const Strides5 xs = strides5(xd);
  const Strides5 gs = strides5(gd);
  Tensor gk(k_shape);
  const int64_t co_n = k_shape[0], ci_n = k_shape[1], kd = k_shape[2], kh = k_shape[3], kw = k_shape[4];
  const double* gp = gy.data();
  const double* xdp = xp.data();
  double* out = gk.data();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (int64_t co = 0; co < co_n; ++co)
    for (int64_t ci = 0; ci < ci_n; ++ci)
      for (int64_t zd = 0; zd < kd; ++zd)
        for (int64_t zh = 0; zh < kh; ++zh)
          for (int64_t zw = 0; zw < kw; ++zw) {
            double acc = 0.0;
            for (int64_t n = 0; n < gd.n; ++n) {
              const double* gc = gp + n * gs.n + co * gs.c;
              const double* xc = xdp + n * xs.n + ci * xs.c;
              for (int64_t p = 0; p < gd.d; ++p)
                for (int64_t q = 0; q < gd.h; ++q) {
                  const double* grow = gc + p * gs.d + q * gs.h;
                  const double* xrow =
                      xc + (p * s.stride[0] + zd) * xs.d + (q * s.stride[1] + zh) * xs.h + zw;
                  if (s.stride[2] == 1) {
                    for (int64_t r = 0; r < gd.w; ++r) acc += grow[r] * xrow[r];
                  } else {
                    for (int64_t r = 0; r < gd.w; ++r) acc += grow[r] * xrow[r * s.stride[2]];
                  }
                }
            }
            out[(((co * ci_n + ci) * kd + zd) * kh + zh) * kw + zw] = acc;
          }
  return gk;
}

Tensor conv3d_grad_bias(const Tensor& gy) {
  const Dims5 gd = dims5(gy.shape(), "grad");
  Tensor gb(Shape{gd.c});
  const int64_t plane = gd.d * gd.h * gd.w;
  const double* gp = gy.data();
  double* out = gb.data();
  for (int64_t c = 0; c < gd.c; ++c) {
    double acc = 0.0;
    for (int64_t n = 0; n < gd.n; ++n) {
      const double* p = gp + (n * gd.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) acc += p[i];
    }
    out[c] = acc;
  }
  return gb;
}

Tensor conv3d_transpose(const Tensor& x, const Tensor& k, const Tensor* bias, const Conv3dSpec& s) {
  check_conv_args(x.shape(), k.shape(), bias, s, true);
  const Shape os = conv3d_transpose_out_shape(x.shape(), k.shape(), s);
  // the kernel layout [Ca,Cb,...] read as a conv kernel [Co=Ca,Ci=Cb] makes this
  // exactly the gradient of that conv w.r.t. its input, applied to x
  Tensor y = conv3d_grad_input(x, k, s, os);
  if (bias) add_bias(y, *bias);
  return y;
}

Tensor pad_zero(const Tensor& x, const std::vector<int64_t>& lo, const std::vector<int64_t>& hi) {
  const int64_t nd = x.ndim();
  if (static_cast<int64_t>(lo.size()) != nd || static_cast<int64_t>(hi.size()) != nd)
    throw ShapeError("pad amounts must match tensor rank");
  Shape os(x.shape());
  for (int64_t a = 0; a < nd; ++a) {
    if (lo[static_cast<size_t>(a)] < 0 || hi[static_cast<size_t>(a)] < 0)
      throw ShapeError("negative padding on axis " + std::to_string(a));
    os[static_cast<size_t>(a)] += lo[static_cast<size_t>(a)] + hi[static_cast<size_t>(a)];
  }
  Tensor out(os);
  std::vector<int64_t> start(lo);
  // copy x into the interior
  const Shape& is = x.shape();
  std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
  const double* src = x.data();
  double* dst = out.data();
  // strides of output
  std::vector<int64_t> ost(static_cast<size_t>(nd), 1);
  for (int64_t a = nd - 2; a >= 0; --a)
    ost[static_cast<size_t>(a)] = ost[static_cast<size_t>(a + 1)] * os[static_cast<size_t>(a + 1)];
  const int64_t rows = x.size() / is.back();
  const int64_t rowlen = is.back();
  for (int64_t row = 0; row < rows; ++row) {
    int64_t rem = row, off = start[static_cast<size_t>(nd - 1)];
    for (int64_t a = nd - 2; a >= 0; --a) {
      const int64_t i = rem % is[static_cast<size_t>(a)];
      rem /= is[static_cast<size_t>(a)];
      off += (i + start[static_cast<size_t>(a)]) * ost[static_cast<size_t>(a)];
    }
    std::memcpy(dst + off, src + row * rowlen, static_cast<size_t>(rowlen) * sizeof(double));
  }
  return out;
}

namespace {
// symmetric (edge-inclusive) reflection of index i into [0, n)
int64_t reflect_index(int64_t i, int64_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

template <typename F>
void for_each_padded(const Shape& os, const Shape& is, const std::vector<int64_t>& lo, F&& f) {
  const int64_t nd = static_cast<int64_t>(os.size());
  std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
  const int64_t total = numel(os);
  for (int64_t flat = 0; flat < total; ++flat) {
    int64_t rem = flat, src_off = 0;
    for (int64_t a = nd - 1; a >= 0; --a) {
      const int64_t i = rem % os[static_cast<size_t>(a)];
      rem /= os[static_cast<size_t>(a)];
      idx[static_cast<size_t>(a)] = reflect_index(i - lo[static_cast<size_t>(a)], is[static_cast<size_t>(a)]);
    }
    for (int64_t a = 0; a < nd; ++a) src_off = src_off * is[static_cast<size_t>(a)] + idx[static_cast<size_t>(a)];
    f(flat, src_off);
  }
}
}  // namespace

Tensor pad_reflect(const Tensor& x, const std::vector<int64_t>& lo, const std::vector<int64_t>& hi) {
  const int64_t nd = x.ndim();
  if (static_cast<int64_t>(lo.size()) != nd || static_cast<int64_t>(hi.size()) != nd)
    throw ShapeError("pad amounts must match tensor rank");
  Shape os(x.shape());
  for (int64_t a = 0; a < nd; ++a) {
    if (lo[static_cast<size_t>(a)] < 0 || hi[static_cast<size_t>(a)] < 0)
      throw ShapeError("negative padding on axis " + std::to_string(a));
    if (lo[static_cast<size_t>(a)] > x.shape()[static_cast<size_t>(a)] ||
        hi[static_cast<size_t>(a)] > x.shape()[static_cast<size_t>(a)])
      throw ShapeError("reflect padding exceeds extent on axis " + std::to_string(a));
    os[static_cast<size_t>(a)] += lo[static_cast<size_t>(a)] + hi[static_cast<size_t>(a)];
  }
  Tensor out(os);
  const double* src = x.data();
  double* dst = out.data();
  for_each_padded(os, x.shape(), lo, [&](int64_t flat, int64_t src_off) { dst[flat] = src[src_off]; });
  return out;
}

Tensor pad_reflect_fold(const Tensor& g, const std::vector<int64_t>& lo, const std::vector<int64_t>& hi) {
  const int64_t nd = g.ndim();
  Shape is(g.shape());
  for (int64_t a = 0; a < nd; ++a)
    is[static_cast<size_t>(a)] -= lo[static_cast<size_t>(a)] + hi[static_cast<size_t>(a)];
  Tensor out(is);
  const double* src = g.data();
  double* dst = out.data();
  for_each_padded(g.shape(), is, lo, [&](int64_t flat, int64_t dst_off) { dst[dst_off] += src[flat]; });
  return out;
}

Tensor crop(const Tensor& x, const std::vector<int64_t>& start, const Shape& sizes) {
  const int64_t nd = x.ndim();
  if (static_cast<int64_t>(start.size()) != nd || static_cast<int64_t>(sizes.size()) != nd)
    throw ShapeError("crop start/sizes must match tensor rank");
  for (int64_t a = 0; a < nd; ++a) {
    const auto ua = static_cast<size_t>(a);
    if (start[ua] < 0 || sizes[ua] < 1 || start[ua] + sizes[ua] > x.shape()[ua])
      throw ShapeError("crop out of bounds on axis " + std::to_string(a));
  }
  Tensor out(sizes);
  const Shape& is = x.shape();
  std::vector<int64_t> ist(static_cast<size_t>(nd), 1);
  for (int64_t a = nd - 2; a >= 0; --a)
    ist[static_cast<size_t>(a)] = ist[static_cast<size_t>(a + 1)] * is[static_cast<size_t>(a + 1)];
  const int64_t rows = out.size() / sizes.back();
  const int64_t rowlen = sizes.back();
  const double* src = x.data();
  double* dst = out.data();
  for (int64_t row = 0; row < rows; ++row) {
    int64_t rem = row, off = start[static_cast<size_t>(nd - 1)];
    for (int64_t a = nd - 2; a >= 0; --a) {
      const int64_t i = rem % sizes[static_cast<size_t>(a)];
      rem /= sizes[static_cast<size_t>(a)];
      off += (i + start[static_cast<size_t>(a)]) * ist[static_cast<size_t>(a)];
    }
    std::memcpy(dst + row * rowlen, src + off, static_cast<size_t>(rowlen) * sizeof(double));
  }
  return out;
}

Tensor uncrop(const Tensor& g, const std::vector<int64_t>& start, const Shape& full) {
  std::vector<int64_t> hi(full.size());
  for (size_t a = 0; a < full.size(); ++a) hi[a] = full[a] - start[a] - g.shape()[a];
  return pad_zero(g, start, hi);
}

Tensor permute(const Tensor& x, const std::vector<int64_t>& perm) {
  const int64_t nd = x.ndim();
  if (static_cast<int64_t>(perm.size()) != nd) throw ShapeError("permutation rank mismatch");
  std::vector<bool> seen(static_cast<size_t>(nd), false);
  Shape os(static_cast<size_t>(nd));
  for (int64_t a = 0; a < nd; ++a) {
    const int64_t p = perm[static_cast<size_t>(a)];
    if (p < 0 || p >= nd || seen[static_cast<size_t>(p)]) throw ShapeError("invalid permutation");
    seen[static_cast<size_t>(p)] = true;
    os[static_cast<size_t>(a)] = x.shape()[static_cast<size_t>(p)];
  }
  Tensor out(os);
  std::vector<int64_t> ist(static_cast<size_t>(nd), 1);
  for (int64_t a = nd - 2; a >= 0; --a)
    ist[static_cast<size_t>(a)] = ist[static_cast<size_t>(a + 1)] * x.shape()[static_cast<size_t>(a + 1)];
  const double* src = x.data();
  double* dst = out.data();
  const int64_t total = out.size();
  std::vector<int64_t> idx(static_cast<size_t>(nd));
  for (int64_t flat = 0; flat < total; ++flat) {
    int64_t rem = flat;
    for (int64_t a = nd - 1; a >= 0; --a) {
      idx[static_cast<size_t>(a)] = rem % os[static_cast<size_t>(a)];
      rem /= os[static_cast<size_t>(a)];
    }
    int64_t off = 0;
    for (int64_t a = 0; a < nd; ++a)
      off += idx[static_cast<size_t>(a)] * ist[static_cast<size_t>(perm[static_cast<size_t>(a)])];
    dst[flat] = src[off];
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const int64_t nd = parts[0].ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw ShapeError("concat axis out of range");
  Shape os(parts[0].shape());
  int64_t total_axis = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != nd) throw ShapeError("concat rank mismatch");
    for (int64_t a = 0; a < nd; ++a)
      if (a != axis && p.shape()[static_cast<size_t>(a)] != os[static_cast<size_t>(a)])
        throw ShapeError("concat extent mismatch on axis " + std::to_string(a));
    total_axis += p.shape()[static_cast<size_t>(axis)];
  }
  os[static_cast<size_t>(axis)] = total_axis;
  Tensor out(os);
  // outer = product of axes before `axis`; copy per outer block
  int64_t outer = 1;
  for (int64_t a = 0; a < axis; ++a) outer *= os[static_cast<size_t>(a)];
  int64_t inner = 1;
  for (int64_t a = axis + 1; a < nd; ++a) inner *= os[static_cast<size_t>(a)];
  double* dst = out.data();
  int64_t axis_off = 0;
  for (const Tensor& p : parts) {
    const int64_t pa = p.shape()[static_cast<size_t>(axis)];
    const double* src = p.data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(dst + (o * total_axis + axis_off) * inner, src + o * pa * inner,
                  static_cast<size_t>(pa * inner) * sizeof(double));
    axis_off += pa;
  }
  return out;
}

Tensor repeat_channels(const Tensor& x, int64_t times) {
  const Dims5 d = dims5(x.shape(), "repeat_channels input");
  if (times < 1) throw ShapeError("repeat count must be >= 1");
  Tensor out(Shape{d.n, d.c * times, d.d, d.h, d.w});
  const int64_t block = d.c * d.d * d.h * d.w;
  const double* src = x.data();
  double* dst = out.data();
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t t = 0; t < times; ++t)
      std::memcpy(dst + (n * times + t) * block, src + n * block,
                  static_cast<size_t>(block) * sizeof(double));
  return out;
}

Tensor sum_channel_repeats(const Tensor& g, int64_t times) {
  const Dims5 d = dims5(g.shape(), "repeat grad");
  if (d.c % times) throw ShapeError("channel axis not divisible by repeat count");
  const int64_t c0 = d.c / times;
  Tensor out(Shape{d.n, c0, d.d, d.h, d.w});
  const int64_t block = c0 * d.d * d.h * d.w;
  const double* src = g.data();
  double* dst = out.data();
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t t = 0; t < times; ++t) {
      const double* s = src + (n * times + t) * block;
      double* o = dst + n * block;
      for (int64_t i = 0; i < block; ++i) o[i] += s[i];
    }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  const Dims5 d = dims5(x.shape(), "global_avg_pool input");
  Tensor out(Shape{d.n, d.c, 1, 1, 1});
  const int64_t plane = d.d * d.h * d.w;
  const double* src = x.data();
  double* dst = out.data();
  for (int64_t nc = 0; nc < d.n * d.c; ++nc) {
    double acc = 0.0;
    const double* p = src + nc * plane;
    for (int64_t i = 0; i < plane; ++i) acc += p[i];
    dst[nc] = acc / static_cast<double>(plane);
  }
  return out;
}

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor* b) {
  if (x.ndim() != 2 || w.ndim() != 2) throw ShapeError("fully_connected expects 2-d operands");
  const int64_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k)
    throw ShapeError("inner axis: x has " + std::to_string(k) + " columns but w has " +
                     std::to_string(w.dim(0)) + " rows");
  if (b && b->size() != n) throw ShapeError("bias axis: length must equal output width");
  Tensor y(Shape{m, n});
  const double* xp = x.data();
  const double* wp = w.data();
  double* yp = y.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < k; ++t) acc += xp[i * k + t] * wp[t * n + j];
      yp[i * n + j] = acc;
    }
  if (b) {
    const double* bp = b->data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) yp[i * n + j] += bp[j];
  }
  return y;
}

}  // namespace pvckit::kernels
