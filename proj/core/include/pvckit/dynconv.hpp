#pragma once

#include <array>
#include <optional>
#include <string>

#include "pvckit/autodiff.hpp"
#include "pvckit/rng.hpp"

namespace pvckit {

// Squeeze-and-excitation style attention head: GAP -> FC(2n) -> ReLU ->
// FC(n) -> sigmoid. `in_channels` is the channel count of the (mixed)
// attention input; n is k_d*k_h*k_w for a_spa, C_in for a_in, C_out for a_out.
struct AttentionHead {
  Tensor fc1_w, fc1_b;  // [in_channels, 2n], [2n]
  Tensor fc2_w, fc2_b;  // [2n, n], [n]
  int64_t in_channels = 0;
  int64_t n = 0;

  static AttentionHead init(int64_t in_channels, int64_t n, Rng& rng);
  int64_t parameter_count() const;
};

// One convolutional layer, static or dynamic. Kernel layout is
// [C_out,C_in,kd,kh,kw] for conv and [C_in,C_out,kd,kh,kw] for transpose.
struct DynConvLayer {
  Tensor w, b;
  std::array<int64_t, 3> pad{0, 0, 0};
  std::array<int64_t, 3> stride{1, 1, 1};
  bool transpose = false;
  bool dynamic = true;
  AttentionHead spa, in, out;        // present when dynamic
  int64_t attention_channels = 0;    // channels the heads consume

  int64_t in_channels() const { return transpose ? w.dim(0) : w.dim(1); }
  int64_t out_channels() const { return transpose ? w.dim(1) : w.dim(0); }
  int64_t spatial_size() const { return w.dim(2) * w.dim(3) * w.dim(4); }
  int64_t parameter_count() const;
};

DynConvLayer make_conv_layer(int64_t cin, int64_t cout, std::array<int64_t, 3> kernel,
                             std::array<int64_t, 3> pad, bool transpose, bool dynamic,
                             int64_t attention_channels, Rng& rng);

// Running densely-connected mix along a chain of layers. At layer 1 the
// state holds the raw network input volume.
struct DenseAttentionState {
  Var x_prev;
  int layer = 0;  // index of the next layer, 1-based; 0 = uninitialized
};

DenseAttentionState dense_attention_start(Var network_input);

// x_l_in = (x_{l-1} + x_prev)/2 with x_prev spatially cropped/zero-padded and
// channel-replicated to match x_{l-1}; the new state carries x_prev := x_l_in.
// Expanding the recursion yields geometrically diminishing weights over the
// preceding layers. At layer 1 the raw input passes through unchanged.
std::pair<Var, DenseAttentionState> dense_mix(Var x_lminus1, DenseAttentionState state);

// tape-bound mirror of a layer's parameters
struct BoundHead {
  Var fc1_w, fc1_b, fc2_w, fc2_b;
};
struct BoundDynConvLayer {
  const DynConvLayer* layer = nullptr;
  Var w, b;
  std::optional<std::array<BoundHead, 3>> heads;  // spa, in, out
};

BoundDynConvLayer bind_layer(Tape& tape, const DynConvLayer& layer);
// appends (prefix + ".W", var) pairs for every trainable tensor of the layer
void collect_layer_params(const std::string& prefix, const BoundDynConvLayer& bound,
                          std::vector<std::pair<std::string, Var>>& out);

// per-batch-item attention vector in (0,1): [N,C,D,H,W] -> [N,n]
Var attention_forward(const BoundHead& head, int64_t expected_channels, Var x_in);

// (1/3) * W (a_spa + a_in + a_out); single-item attention vectors
Var dynamic_kernel(Var w, Var a_spa, Var a_in, Var a_out, bool transpose);

struct DynForwardOptions {
  bool dc_enabled = true;
  bool force_attention_one = false;  // test hook: saturate all attentions at 1
};

struct DynForwardResult {
  Var y;
  DenseAttentionState state;
};

// Full dynamic forward: mixes the attention input (Eq.-4 style when
// dc_enabled, plain previous-layer features otherwise), evaluates the three
// heads per batch item, modulates the kernel, and convolves. `x` is the
// layer's convolution input (possibly a skip concatenation); `prev_features`
// is the previous layer's output feature map.
DynForwardResult dynconv_forward(const BoundDynConvLayer& layer, Var x, Var prev_features,
                                 DenseAttentionState state, const DynForwardOptions& opts);

}  // namespace pvckit
