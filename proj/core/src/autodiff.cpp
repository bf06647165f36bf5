#include "pvckit/autodiff.hpp"

#include <cmath>

namespace pvckit {

namespace {

void check_same_tape(const Var& a, const Var& b) {
  if (!a.defined() || !b.defined()) throw ContractError("undefined Var passed to op");
  if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename F>
Tensor map1(const Tensor& a, F f) {
  Tensor out(a.shape());
  const double* ap = a.data();
  double* op = out.data();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) op[i] = f(ap[i]);
  return out;
}

template <typename F>
Tensor map2(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  const double* ap = a.data();
  const double* bp = b.data();
  double* op = out.data();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) op[i] = f(ap[i], bp[i]);
  return out;
}

// row-major matmul helpers for fully_connected gradients
Tensor mm_nt(const Tensor& a, const Tensor& b) {  // a[M,N] * b[K,N]^T -> [M,K]
  const int64_t m = a.dim(0), n = a.dim(1), k = b.dim(0);
  Tensor out(Shape{m, k});
  const double* ap = a.data();
  const double* bp = b.data();
  double* op = out.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < n; ++t) acc += ap[i * n + t] * bp[j * n + t];
      op[i * k + j] = acc;
    }
  return out;
}

Tensor mm_tn(const Tensor& a, const Tensor& b) {  // a[M,K]^T * b[M,N] -> [K,N]
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{k, n});
  const double* ap = a.data();
  const double* bp = b.data();
  double* op = out.data();
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < m; ++t) acc += ap[t * k + i] * bp[t * n + j];
      op[i * n + j] = acc;
    }
  return out;
}

Tensor col_sums(const Tensor& a) {  // [M,N] -> [N]
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor out(Shape{n});
  const double* ap = a.data();
  double* op = out.data();
  for (int64_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int64_t i = 0; i < m; ++i) acc += ap[i * n + j];
    op[j] = acc;
  }
  return out;
}

}  // namespace

const Tensor& Var::value() const {
  if (!defined()) throw ContractError("value() on an undefined Var");
  return tape_->value_of(id_);
}

const Tensor& Gradients::at(const Var& v) const {
  auto it = by_id_.find(v.id());
  if (it == by_id_.end()) throw ContractError("no gradient recorded for this Var (not a watched leaf?)");
  return it->second;
}

bool Gradients::has(const Var& v) const { return by_id_.count(v.id()) != 0; }

Var Tape::watch(Tensor t) {
  if (!t.defined()) throw ContractError("watch() of an undefined tensor");
  Node n;
  n.value = std::move(t);
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor t) {
  if (!t.defined()) throw ContractError("constant() of an undefined tensor");
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int32_t>(nodes_.size() - 1));
}

Var Tape::emit(const char* op, Tensor value, std::vector<int32_t> parents, BackwardFn fn) {
  if (finite_checks_enabled()) value.check_finite(op);
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    n.parents = std::move(parents);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int32_t>(nodes_.size() - 1));
}

const Tensor& Tape::value_of(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }

Gradients Tape::backward(const Var& loss) {
  if (!grad_enabled_) throw ContractError("backward() on a gradient-disabled tape");
  if (!loss.defined() || loss.tape() != this) throw ContractError("loss does not belong to this tape");
  const Tensor& lv = loss.value();
  if (lv.size() != 1)
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(lv.shape()));

  std::vector<Tensor> g(nodes_.size());
  g[static_cast<size_t>(loss.id())] = Tensor::full(lv.shape(), 1.0);

  std::vector<Tensor> pg;
  for (int32_t i = loss.id(); i >= 0; --i) {
    Node& node = nodes_[static_cast<size_t>(i)];
    Tensor& gi = g[static_cast<size_t>(i)];
    if (!gi.defined()) continue;
    if (node.backward) {
      pg.assign(node.parents.size(), Tensor());
      node.backward(gi, pg);
      for (size_t j = 0; j < node.parents.size(); ++j) {
        if (!pg[j].defined()) continue;
        Tensor& dst = g[static_cast<size_t>(node.parents[j])];
        if (!dst.defined())
          dst = std::move(pg[j]);
        else
          dst = map2(dst, pg[j], [](double a, double b) { return a + b; });
      }
      gi = Tensor();  // free as we go
    }
  }

  Gradients out;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].requires_grad) continue;
    Tensor& gi = g[i];
    out.by_id_[static_cast<int32_t>(i)] = gi.defined() ? std::move(gi) : Tensor(nodes_[i].value.shape());
  }
  return out;
}

// ---- elementwise -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "add");
  Tensor y = map2(a.value(), b.value(), [](double x, double z) { return x + z; });
  return a.tape()->emit("add", std::move(y), {a.id(), b.id()},
                        [](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = g;
                          pg[1] = g;
                        });
}

Var sub(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "sub");
  Tensor y = map2(a.value(), b.value(), [](double x, double z) { return x - z; });
  return a.tape()->emit("sub", std::move(y), {a.id(), b.id()},
                        [](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = g;
                          pg[1] = map1(g, [](double v) { return -v; });
                        });
}

Var mul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "mul");
  Tensor av = a.value(), bv = b.value();
  Tensor y = map2(av, bv, [](double x, double z) { return x * z; });
  return a.tape()->emit("mul", std::move(y), {a.id(), b.id()},
                        [av, bv](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = map2(g, bv, [](double gv, double z) { return gv * z; });
                          pg[1] = map2(g, av, [](double gv, double x) { return gv * x; });
                        });
}

Var div(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "div");
  Tensor av = a.value(), bv = b.value();
  Tensor y = map2(av, bv, [](double x, double z) { return x / z; });
  return a.tape()->emit("div", std::move(y), {a.id(), b.id()},
                        [av, bv](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = map2(g, bv, [](double gv, double z) { return gv / z; });
                          pg[1] = Tensor(g.shape());
                          const double* gp = g.data();
                          const double* ap = av.data();
                          const double* bp = bv.data();
                          double* op = pg[1].data();
                          for (int64_t i = 0; i < g.size(); ++i)
                            op[i] = -gp[i] * ap[i] / (bp[i] * bp[i]);
                        });
}

Var add_scalar(const Var& a, double c) {
  Tensor y = map1(a.value(), [c](double x) { return x + c; });
  return a.tape()->emit("add_scalar", std::move(y), {a.id()},
                        [](const Tensor& g, std::vector<Tensor>& pg) { pg[0] = g; });
}

Var mul_scalar(const Var& a, double c) {
  Tensor y = map1(a.value(), [c](double x) { return x * c; });
  return a.tape()->emit("mul_scalar", std::move(y), {a.id()},
                        [c](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = map1(g, [c](double v) { return v * c; });
                        });
}

Var square(const Var& a) { return mul(a, a); }

Var relu(const Var& a) {
  Tensor av = a.value();
  Tensor y = map1(av, [](double x) { return x > 0.0 ? x : 0.0; });
  return a.tape()->emit("relu", std::move(y), {a.id()},
                        [av](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = map2(g, av, [](double gv, double x) { return x > 0.0 ? gv : 0.0; });
                        });
}

Var sigmoid(const Var& a) {
  Tensor y = map1(a.value(), [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Tensor yv = y;
  return a.tape()->emit("sigmoid", std::move(y), {a.id()},
                        [yv](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = map2(g, yv, [](double gv, double s) { return gv * s * (1.0 - s); });
                        });
}

Var abs(const Var& a) {
  Tensor av = a.value();
  Tensor y = map1(av, [](double x) { return std::fabs(x); });
  return a.tape()->emit("abs", std::move(y), {a.id()},
                        [av](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = map2(g, av, [](double gv, double x) {
                            return x > 0.0 ? gv : (x < 0.0 ? -gv : 0.0);
                          });
                        });
}

Var sum(const Var& a) {
  const Tensor& av = a.value();
  double acc = 0.0;
  const double* p = av.data();
  for (int64_t i = 0; i < av.size(); ++i) acc += p[i];
  Shape in_shape = av.shape();
  return a.tape()->emit("sum", Tensor::scalar(acc), {a.id()},
                        [in_shape](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = Tensor::full(in_shape, g.value());
                        });
}

Var mean(const Var& a) {
  const Tensor& av = a.value();
  double acc = 0.0;
  const double* p = av.data();
  for (int64_t i = 0; i < av.size(); ++i) acc += p[i];
  const double n = static_cast<double>(av.size());
  Shape in_shape = av.shape();
  return a.tape()->emit("mean", Tensor::scalar(acc / n), {a.id()},
                        [in_shape, n](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = Tensor::full(in_shape, g.value() / n);
                        });
}

// ---- shape / movement --------------------------------------------------------

Var global_avg_pool(const Var& x) {
  Tensor y = kernels::global_avg_pool(x.value());
  Shape in_shape = x.shape();
  return x.tape()->emit("global_avg_pool", std::move(y), {x.id()},
                        [in_shape](const Tensor& g, std::vector<Tensor>& pg) {
                          const int64_t plane = in_shape[2] * in_shape[3] * in_shape[4];
                          Tensor out(in_shape);
                          const double* gp = g.data();
                          double* op = out.data();
                          for (int64_t nc = 0; nc < in_shape[0] * in_shape[1]; ++nc) {
                            const double v = gp[nc] / static_cast<double>(plane);
                            double* dst = op + nc * plane;
                            for (int64_t i = 0; i < plane; ++i) dst[i] = v;
                          }
                          pg[0] = std::move(out);
                        });
}

Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  Shape in_shape = a.shape();
  return a.tape()->emit("reshape", std::move(y), {a.id()},
                        [in_shape](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = g.reshaped(in_shape);
                        });
}

Var permute(const Var& a, std::vector<int64_t> perm) {
  Tensor y = kernels::permute(a.value(), perm);
  std::vector<int64_t> inv(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int64_t>(i);
  return a.tape()->emit("permute", std::move(y), {a.id()},
                        [inv](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = kernels::permute(g, inv);
                        });
}

Var concat(const std::vector<Var>& parts, int64_t axis) {
  if (parts.empty()) throw ContractError("concat of zero Vars");
  std::vector<Tensor> vals;
  std::vector<int32_t> ids;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    vals.push_back(p.value());
    ids.push_back(p.id());
  }
  Tensor y = kernels::concat(vals, axis);
  const int64_t nd = vals[0].ndim();
  const int64_t ax = axis < 0 ? axis + nd : axis;
  std::vector<Shape> shapes;
  for (const Tensor& v : vals) shapes.push_back(v.shape());
  return parts[0].tape()->emit(
      "concat", std::move(y), std::move(ids),
      [shapes, ax](const Tensor& g, std::vector<Tensor>& pg) {
        int64_t off = 0;
        for (size_t j = 0; j < shapes.size(); ++j) {
          std::vector<int64_t> start(shapes[j].size(), 0);
          start[static_cast<size_t>(ax)] = off;
          pg[j] = kernels::crop(g, start, shapes[j]);
          off += shapes[j][static_cast<size_t>(ax)];
        }
      });
}

Var slice(const Var& a, std::vector<int64_t> start, Shape sizes) {
  Tensor y = kernels::crop(a.value(), start, sizes);
  Shape full = a.shape();
  return a.tape()->emit("slice", std::move(y), {a.id()},
                        [start, full](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = kernels::uncrop(g, start, full);
                        });
}

Var pad_zero(const Var& a, std::vector<int64_t> lo, std::vector<int64_t> hi) {
  Tensor y = kernels::pad_zero(a.value(), lo, hi);
  Shape in_shape = a.shape();
  return a.tape()->emit("pad_zero", std::move(y), {a.id()},
                        [lo, in_shape](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = kernels::crop(g, lo, in_shape);
                        });
}

Var pad_reflect(const Var& a, std::vector<int64_t> lo, std::vector<int64_t> hi) {
  Tensor y = kernels::pad_reflect(a.value(), lo, hi);
  return a.tape()->emit("pad_reflect", std::move(y), {a.id()},
                        [lo, hi](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = kernels::pad_reflect_fold(g, lo, hi);
                        });
}

Var repeat_channels(const Var& a, int64_t times) {
  Tensor y = kernels::repeat_channels(a.value(), times);
  return a.tape()->emit("repeat_channels", std::move(y), {a.id()},
                        [times](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = kernels::sum_channel_repeats(g, times);
                        });
}

// ---- linear algebra ------------------------------------------------------------

Var matmul(const Var& x, const Var& w) {
  check_same_tape(x, w);
  Tensor xv = x.value(), wv = w.value();
  Tensor y = kernels::fully_connected(xv, wv, nullptr);
  return x.tape()->emit("matmul", std::move(y), {x.id(), w.id()},
                        [xv, wv](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = mm_nt(g, wv);
                          pg[1] = mm_tn(xv, g);
                        });
}

Var fully_connected(const Var& x, const Var& w, const Var& b) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  Tensor xv = x.value(), wv = w.value(), bv = b.value();
  Tensor y = kernels::fully_connected(xv, wv, &bv);
  return x.tape()->emit("fully_connected", std::move(y), {x.id(), w.id(), b.id()},
                        [xv, wv](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = mm_nt(g, wv);
                          pg[1] = mm_tn(xv, g);
                          pg[2] = col_sums(g);
                        });
}

// ---- convolution ---------------------------------------------------------------

Var conv3d(const Var& x, const Var& k, const Var& bias, const kernels::Conv3dSpec& s) {
  check_same_tape(x, k);
  check_same_tape(x, bias);
  Tensor xv = x.value(), kv = k.value(), bv = bias.value();
  Tensor y = kernels::conv3d(xv, kv, &bv, s);
  return x.tape()->emit("conv3d", std::move(y), {x.id(), k.id(), bias.id()},
                        [xv, kv, s](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = kernels::conv3d_grad_input(g, kv, s, xv.shape());
                          pg[1] = kernels::conv3d_grad_kernel(g, xv, s, kv.shape());
                          pg[2] = kernels::conv3d_grad_bias(g);
                        });
}

Var conv3d(const Var& x, const Var& k, const kernels::Conv3dSpec& s) {
  check_same_tape(x, k);
  Tensor xv = x.value(), kv = k.value();
  Tensor y = kernels::conv3d(xv, kv, nullptr, s);
  return x.tape()->emit("conv3d", std::move(y), {x.id(), k.id()},
                        [xv, kv, s](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = kernels::conv3d_grad_input(g, kv, s, xv.shape());
                          pg[1] = kernels::conv3d_grad_kernel(g, xv, s, kv.shape());
                        });
}

Var conv3d_transpose(const Var& x, const Var& k, const Var& bias, const kernels::Conv3dSpec& s) {
  check_same_tape(x, k);
  check_same_tape(x, bias);
  Tensor xv = x.value(), kv = k.value(), bv = bias.value();
  Tensor y = kernels::conv3d_transpose(xv, kv, &bv, s);
  return x.tape()->emit("conv3d_transpose", std::move(y), {x.id(), k.id(), bias.id()},
                        [xv, kv, s](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = kernels::conv3d(g, kv, nullptr, s);
                          pg[1] = kernels::conv3d_grad_kernel(xv, g, s, kv.shape());
                          pg[2] = kernels::conv3d_grad_bias(g);
                        });
}

Var conv3d_transpose(const Var& x, const Var& k, const kernels::Conv3dSpec& s) {
  check_same_tape(x, k);
  Tensor xv = x.value(), kv = k.value();
  Tensor y = kernels::conv3d_transpose(xv, kv, nullptr, s);
  return x.tape()->emit("conv3d_transpose", std::move(y), {x.id(), k.id()},
                        [xv, kv, s](const Tensor& g, std::vector<Tensor>& pg) {
                          pg[0] = kernels::conv3d(g, kv, nullptr, s);
                          pg[1] = kernels::conv3d_grad_kernel(xv, g, s, kv.shape());
                        });
}

// ---- dynamic-kernel modulation ---------------------------------------------------

Var kernel_attention(const Var& w, const Var& a_spa, const Var& a_in, const Var& a_out, bool transpose) {
  check_same_tape(w, a_spa);
  check_same_tape(w, a_in);
  check_same_tape(w, a_out);
  const Tensor wv = w.value();
  if (wv.ndim() != 5) throw ShapeError("kernel_attention expects a 5-d kernel");
  const int64_t e0 = wv.dim(0), e1 = wv.dim(1);
  const int64_t spatial = wv.dim(2) * wv.dim(3) * wv.dim(4);
  const int64_t cin = transpose ? e0 : e1;
  const int64_t cout = transpose ? e1 : e0;
  if (a_spa.value().size() != spatial)
    throw ShapeError("a_spa length " + std::to_string(a_spa.value().size()) +
                     " does not match kernel spatial size " + std::to_string(spatial));
  if (a_in.value().size() != cin)
    throw ShapeError("a_in length does not match kernel input channels " + std::to_string(cin));
  if (a_out.value().size() != cout)
    throw ShapeError("a_out length does not match kernel output channels " + std::to_string(cout));

  const Tensor sv = a_spa.value(), iv = a_in.value(), ov = a_out.value();
  // attention along axis 0 / axis 1 of the kernel
  const Tensor& a0 = transpose ? iv : ov;
  const Tensor& a1 = transpose ? ov : iv;

  Tensor y(wv.shape());
  {
    const double* wp = wv.data();
    const double* s0 = a0.data();
    const double* s1 = a1.data();
    const double* sp = sv.data();
    double* yp = y.data();
    for (int64_t i = 0; i < e0; ++i)
      for (int64_t j = 0; j < e1; ++j) {
        const int64_t base = (i * e1 + j) * spatial;
        const double cij = s0[i] + s1[j];
        for (int64_t t = 0; t < spatial; ++t)
          yp[base + t] = wp[base + t] * (cij + sp[t]) * (1.0 / 3.0);
      }
  }

  return w.tape()->emit(
      "kernel_attention", std::move(y), {w.id(), a_spa.id(), a_in.id(), a_out.id()},
      [wv, sv, iv, ov, transpose, e0, e1, spatial](const Tensor& g, std::vector<Tensor>& pg) {
        const Tensor& a0 = transpose ? iv : ov;
        const Tensor& a1 = transpose ? ov : iv;
        Tensor gw(wv.shape());
        Tensor g0(Shape{e0}), g1(Shape{e1}), gs(Shape{spatial});
        const double* gp = g.data();
        const double* wp = wv.data();
        const double* s0 = a0.data();
        const double* s1 = a1.data();
        const double* sp = sv.data();
        double* gwp = gw.data();
        double* g0p = g0.data();
        double* g1p = g1.data();
        double* gsp = gs.data();
        for (int64_t i = 0; i < e0; ++i)
          for (int64_t j = 0; j < e1; ++j) {
            const int64_t base = (i * e1 + j) * spatial;
            const double cij = s0[i] + s1[j];
            for (int64_t t = 0; t < spatial; ++t) {
              const double gw3 = gp[base + t] * (1.0 / 3.0);
              gwp[base + t] = gw3 * (cij + sp[t]);
              const double gwv = gw3 * wp[base + t];
              g0p[i] += gwv;
              g1p[j] += gwv;
              gsp[t] += gwv;
            }
          }
        pg[0] = std::move(gw);
        pg[1] = std::move(gs);
        pg[2] = transpose ? std::move(g0) : std::move(g1);  // a_in
        pg[3] = transpose ? std::move(g1) : std::move(g0);  // a_out
      });
}

}  // namespace pvckit
