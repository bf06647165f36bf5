#include "pvckit/dynconv.hpp"

#include "pvckit/optim.hpp"

namespace pvckit {

AttentionHead AttentionHead::init(int64_t in_channels, int64_t n, Rng& rng) {
  AttentionHead h;
  h.in_channels = in_channels;
  h.n = n;
  h.fc1_w = xavier_fc(in_channels, 2 * n, rng);
  h.fc1_b = Tensor(Shape{2 * n});
  h.fc2_w = xavier_fc(2 * n, n, rng);
  h.fc2_b = Tensor(Shape{n});
  return h;
}

int64_t AttentionHead::parameter_count() const {
  return fc1_w.size() + fc1_b.size() + fc2_w.size() + fc2_b.size();
}

int64_t DynConvLayer::parameter_count() const {
  int64_t n = w.size() + b.size();
  if (dynamic) n += spa.parameter_count() + in.parameter_count() + out.parameter_count();
  return n;
}

DynConvLayer make_conv_layer(int64_t cin, int64_t cout, std::array<int64_t, 3> kernel,
                             std::array<int64_t, 3> pad, bool transpose, bool dynamic,
                             int64_t attention_channels, Rng& rng) {
  DynConvLayer l;
  const Shape ks = transpose ? Shape{cin, cout, kernel[0], kernel[1], kernel[2]}
                             : Shape{cout, cin, kernel[0], kernel[1], kernel[2]};
  l.w = xavier_conv_kernel(ks, rng);
  l.b = Tensor(Shape{cout});
  l.pad = pad;
  l.transpose = transpose;
  l.dynamic = dynamic;
  l.attention_channels = attention_channels;
  if (dynamic) {
    const int64_t n_spa = kernel[0] * kernel[1] * kernel[2];
    l.spa = AttentionHead::init(attention_channels, n_spa, rng);
    l.in = AttentionHead::init(attention_channels, cin, rng);
    l.out = AttentionHead::init(attention_channels, cout, rng);
  }
  return l;
}

DenseAttentionState dense_attention_start(Var network_input) {
  return DenseAttentionState{network_input, 1};
}

namespace {

// crop/zero-pad x_prev spatially and replicate its channels so it matches
// the target feature shape (batch must already agree)
Var reconcile_to(Var src, const Shape& target) {
  Shape s = src.shape();
  if (s.size() != 5 || target.size() != 5)
    throw ShapeError("dense_mix operands must be 5-d");
  if (s[0] != target[0])
    throw ShapeError("dense_mix: batch extent " + std::to_string(s[0]) + " vs " +
                     std::to_string(target[0]));
  // spatial: per-axis center crop or even zero-pad
  std::vector<int64_t> crop_start{0, 0, 0, 0, 0};
  Shape crop_size = s;
  bool need_crop = false;
  for (int a = 2; a < 5; ++a) {
    if (s[a] > target[a]) {
      crop_start[a] = (s[a] - target[a]) / 2;
      crop_size[a] = target[a];
      need_crop = true;
    }
  }
  if (need_crop) {
    src = slice(src, crop_start, crop_size);
    s = src.shape();
  }
  std::vector<int64_t> lo{0, 0, 0, 0, 0}, hi{0, 0, 0, 0, 0};
  bool need_pad = false;
  for (int a = 2; a < 5; ++a) {
    if (s[a] < target[a]) {
      lo[a] = (target[a] - s[a]) / 2;
      hi[a] = target[a] - s[a] - lo[a];
      need_pad = true;
    }
  }
  if (need_pad) {
    src = pad_zero(src, lo, hi);
    s = src.shape();
  }
  if (s[1] != target[1]) {
    if (s[1] < target[1] && target[1] % s[1] == 0)
      src = repeat_channels(src, target[1] / s[1]);
    else
      throw ShapeError("dense_mix: irreconcilable channel extents " + std::to_string(s[1]) +
                       " vs " + std::to_string(target[1]));
  }
  return src;
}

Var attention_row(Var a, int64_t i) {
  const int64_t n = a.shape()[1];
  return reshape(slice(a, {i, 0}, Shape{1, n}), Shape{n});
}

}  // namespace

std::pair<Var, DenseAttentionState> dense_mix(Var x_lminus1, DenseAttentionState state) {
  if (state.layer < 1 || !state.x_prev.defined())
    throw ContractError("dense_mix on an uninitialized state");
  Var mixed;
  if (state.layer == 1) {
    mixed = state.x_prev;  // the raw network input drives the first layer
  } else {
    Var prev = reconcile_to(state.x_prev, x_lminus1.shape());
    mixed = mul_scalar(add(x_lminus1, prev), 0.5);
  }
  return {mixed, DenseAttentionState{mixed, state.layer + 1}};
}

BoundDynConvLayer bind_layer(Tape& tape, const DynConvLayer& layer) {
  BoundDynConvLayer b;
  b.layer = &layer;
  b.w = tape.watch(layer.w);
  b.b = tape.watch(layer.b);
  if (layer.dynamic) {
    auto bind_head = [&tape](const AttentionHead& h) {
      return BoundHead{tape.watch(h.fc1_w), tape.watch(h.fc1_b), tape.watch(h.fc2_w),
                       tape.watch(h.fc2_b)};
    };
    b.heads = std::array<BoundHead, 3>{bind_head(layer.spa), bind_head(layer.in),
                                       bind_head(layer.out)};
  }
  return b;
}

void collect_layer_params(const std::string& prefix, const BoundDynConvLayer& bound,
                          std::vector<std::pair<std::string, Var>>& out) {
  out.emplace_back(prefix + ".W", bound.w);
  out.emplace_back(prefix + ".B", bound.b);
  if (bound.heads) {
    static const char* head_name[3] = {"spa", "in", "out"};
    for (int i = 0; i < 3; ++i) {
      const BoundHead& h = (*bound.heads)[static_cast<size_t>(i)];
      const std::string hp = prefix + "." + head_name[i];
      out.emplace_back(hp + ".fc1_w", h.fc1_w);
      out.emplace_back(hp + ".fc1_b", h.fc1_b);
      out.emplace_back(hp + ".fc2_w", h.fc2_w);
      out.emplace_back(hp + ".fc2_b", h.fc2_b);
    }
  }
}

Var attention_forward(const BoundHead& head, int64_t expected_channels, Var x_in) {
  const Shape& s = x_in.shape();
  if (s.size() != 5)
    throw ShapeError("attention input must be 5-d, got " + shape_str(s));
  if (s[1] != expected_channels)
    throw ShapeError("attention input channel axis: got " + std::to_string(s[1]) +
                     ", head expects " + std::to_string(expected_channels));
  Var squeezed = reshape(global_avg_pool(x_in), Shape{s[0], s[1]});
  Var h = relu(fully_connected(squeezed, head.fc1_w, head.fc1_b));
  return sigmoid(fully_connected(h, head.fc2_w, head.fc2_b));
}

Var dynamic_kernel(Var w, Var a_spa, Var a_in, Var a_out, bool transpose) {
  return kernel_attention(w, a_spa, a_in, a_out, transpose);
}

DynForwardResult dynconv_forward(const BoundDynConvLayer& bound, Var x, Var prev_features,
                                 DenseAttentionState state, const DynForwardOptions& opts) {
  const DynConvLayer& layer = *bound.layer;
  const kernels::Conv3dSpec spec{layer.pad, layer.stride};

  if (!layer.dynamic) {
    Var y = layer.transpose ? conv3d_transpose(x, bound.w, bound.b, spec)
                            : conv3d(x, bound.w, bound.b, spec);
    return {y, state};
  }

  Var x_att;
  DenseAttentionState next = state;
  if (opts.dc_enabled) {
    std::tie(x_att, next) = dense_mix(prev_features, state);
  } else {
    x_att = prev_features;  // attention from the previous layer only
  }

  const int64_t batch = x.shape()[0];
  Var a_spa, a_in, a_out;
  if (opts.force_attention_one) {
    Tape& tape = *x.tape();
    a_spa = tape.constant(Tensor::ones(Shape{batch, layer.spatial_size()}));
    a_in = tape.constant(Tensor::ones(Shape{batch, layer.in_channels()}));
    a_out = tape.constant(Tensor::ones(Shape{batch, layer.out_channels()}));
  } else {
    a_spa = attention_forward((*bound.heads)[0], layer.attention_channels, x_att);
    a_in = attention_forward((*bound.heads)[1], layer.attention_channels, x_att);
    a_out = attention_forward((*bound.heads)[2], layer.attention_channels, x_att);
  }

  Shape item_shape = x.shape();
  item_shape[0] = 1;
  std::vector<Var> items;
  items.reserve(static_cast<size_t>(batch));
  for (int64_t i = 0; i < batch; ++i) {
    Var wk = dynamic_kernel(bound.w, attention_row(a_spa, i), attention_row(a_in, i),
                            attention_row(a_out, i), layer.transpose);
    Var xi = batch == 1 ? x : slice(x, {i, 0, 0, 0, 0}, item_shape);
    items.push_back(layer.transpose ? conv3d_transpose(xi, wk, bound.b, spec)
                                    : conv3d(xi, wk, bound.b, spec));
  }
  Var y = items.size() == 1 ? items[0] : concat(items, 0);
  return {y, next};
}

}  // namespace pvckit
