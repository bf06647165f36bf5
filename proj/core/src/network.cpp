#include "pvckit/network.hpp"

namespace pvckit {

namespace {

std::array<int64_t, 3> dense_padding(const std::array<int64_t, 3>& k) {
  return {(k[0] - 1) / 2, (k[1] - 1) / 2, (k[2] - 1) / 2};
}

}  // namespace

void validate_config(const NetworkConfig& cfg) {
  if (cfg.input_channels != 1 && cfg.input_channels != 2)
    throw ConfigError("input_channels must be 1 or 2");
  if (cfg.filters < 1) throw ConfigError("filters must be >= 1");
  if (cfg.down_up_blocks < 1) throw ConfigError("down_up_blocks must be >= 1");
  if (cfg.dense_layers_per_block < 0) throw ConfigError("dense_layers_per_block must be >= 0");
  for (int a = 0; a < 3; ++a) {
    if (cfg.sampling_kernel[a] < 1 || cfg.dense_kernel[a] < 1)
      throw ConfigError("kernel extents must be >= 1");
    if (cfg.dense_kernel[a] % 2 == 0)
      throw ConfigError("dense kernel extents must be odd (zero-padding preserves shape)");
  }
  if (cfg.dc_dy_enabled && cfg.dynamic_enabled && cfg.filters % cfg.input_channels != 0)
    throw ConfigError("filters must be divisible by input_channels for the dense attention mix");

  // walk the down path; valid convs must keep every extent >= 1
  std::array<int64_t, 3> dims = cfg.input_dims;
  for (int64_t b = 0; b < cfg.down_up_blocks; ++b) {
    for (int a = 0; a < 3; ++a) {
      dims[static_cast<size_t>(a)] -= cfg.sampling_kernel[static_cast<size_t>(a)] - 1;
      if (dims[static_cast<size_t>(a)] < 1)
        throw ConfigError("down block " + std::to_string(b) + ": input too small on axis " +
                          std::string(1, "DHW"[a]) + " for the sampling convolution");
    }
  }
}

Model build(const NetworkConfig& cfg, uint64_t seed) {
  validate_config(cfg);
  Model m;
  m.config = cfg;
  Rng rng(seed);
  const int64_t f = cfg.filters;
  const std::array<int64_t, 3> no_pad{0, 0, 0};
  const std::array<int64_t, 3> dense_pad = dense_padding(cfg.dense_kernel);

  auto add_layer = [&](const std::string& name, int64_t cin, int64_t cout,
                       std::array<int64_t, 3> kernel, std::array<int64_t, 3> pad, bool transpose,
                       int64_t att_ch) {
    m.layer_names.push_back(name);
    m.layers.push_back(make_conv_layer(cin, cout, kernel, pad, transpose, cfg.dynamic_enabled,
                                       att_ch, rng));
  };

  auto add_dense_block = [&](const std::string& prefix) {
    for (int64_t j = 0; j < cfg.dense_layers_per_block; ++j)
      add_layer(prefix + ".dense" + std::to_string(j), (j + 1) * f, f, cfg.dense_kernel, dense_pad,
                false, f);
    add_layer(prefix + ".trans", (cfg.dense_layers_per_block + 1) * f, f, {1, 1, 1}, no_pad, false,
              f);
  };

  for (int64_t b = 0; b < cfg.down_up_blocks; ++b) {
    const std::string prefix = "down" + std::to_string(b);
    const int64_t cin = b == 0 ? cfg.input_channels : f;
    add_layer(prefix + ".sample", cin, f, cfg.sampling_kernel, no_pad, false,
              b == 0 ? cfg.input_channels : f);
    add_dense_block(prefix);
  }
  for (int64_t b = 0; b < cfg.down_up_blocks; ++b) {
    const std::string prefix = "up" + std::to_string(b);
    const int64_t cin = b == 0 ? f : 2 * f;  // conveying-path concatenation
    add_layer(prefix + ".sample", cin, f, cfg.sampling_kernel, no_pad, true, f);
    add_dense_block(prefix);
  }
  add_layer("out", f, 1, {1, 1, 1}, no_pad, false, f);
  return m;
}

std::vector<std::pair<std::string, Tensor*>> Model::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    DynConvLayer& l = layers[i];
    const std::string& p = layer_names[i];
    out.emplace_back(p + ".W", &l.w);
    out.emplace_back(p + ".B", &l.b);
    if (l.dynamic) {
      static const char* head_name[3] = {"spa", "in", "out"};
      AttentionHead* heads[3] = {&l.spa, &l.in, &l.out};
      for (int h = 0; h < 3; ++h) {
        const std::string hp = p + "." + head_name[h];
        out.emplace_back(hp + ".fc1_w", &heads[h]->fc1_w);
        out.emplace_back(hp + ".fc1_b", &heads[h]->fc1_b);
        out.emplace_back(hp + ".fc2_w", &heads[h]->fc2_w);
        out.emplace_back(hp + ".fc2_b", &heads[h]->fc2_b);
      }
    }
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Model::parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<Model*>(this)->parameters()) out.emplace_back(name, t);
  return out;
}

int64_t Model::parameter_count() const {
  int64_t n = 0;
  for (const DynConvLayer& l : layers) n += l.parameter_count();
  return n;
}

Tensor* Model::find_parameter(const std::string& name) {
  for (auto& [n, t] : parameters())
    if (n == name) return t;
  return nullptr;
}

BoundModel bind_model(Tape& tape, const Model& model) {
  BoundModel b;
  b.model = &model;
  b.layers.reserve(model.layers.size());
  for (size_t i = 0; i < model.layers.size(); ++i) {
    b.layers.push_back(bind_layer(tape, model.layers[i]));
    collect_layer_params(model.layer_names[i], b.layers.back(), b.params);
  }
  return b;
}

Var BoundModel::forward(Var x, const ForwardOptions& opts) const {
  const NetworkConfig& cfg = model->config;
  const Shape& xs = x.shape();
  if (xs.size() != 5)
    throw ShapeError("network input must be [N,C,D,H,W], got " + shape_str(xs));
  if (xs[1] != cfg.input_channels)
    throw ShapeError("network input channel axis: got " + std::to_string(xs[1]) + ", expected " +
                     std::to_string(cfg.input_channels));

  DynForwardOptions dyn{cfg.dc_dy_enabled, opts.force_attention_one};
  DenseAttentionState state = dense_attention_start(x);
  Var prev = x;
  size_t li = 0;

  auto step = [&](Var input) {
    DynForwardResult r = dynconv_forward(layers[li], input, prev, state, dyn);
    ++li;
    state = r.state;
    Var y = relu(r.y);  // ReLU after every convolutional layer
    prev = y;
    return y;
  };

  auto dense_block = [&](Var block_in) {
    std::vector<Var> feats{block_in};
    for (int64_t j = 0; j < cfg.dense_layers_per_block; ++j) {
      Var in_j = feats.size() == 1 ? feats[0] : concat(feats, 1);
      feats.push_back(step(in_j));
    }
    Var trans_in = feats.size() == 1 ? feats[0] : concat(feats, 1);
    return step(trans_in);
  };

  std::vector<Var> skips;
  Var cur = x;
  for (int64_t b = 0; b < cfg.down_up_blocks; ++b) {
    cur = step(cur);
    cur = dense_block(cur);
    if (b + 1 < cfg.down_up_blocks) skips.push_back(cur);
  }
  for (int64_t b = 0; b < cfg.down_up_blocks; ++b) {
    Var input = b == 0 ? cur : concat({cur, skips[static_cast<size_t>(cfg.down_up_blocks - 1 - b)]}, 1);
    cur = step(input);
    cur = dense_block(cur);
  }
  return step(cur);  // 1x1x1 to a single non-negative activity channel
}

Tensor forward_nograd(const Model& model, const Tensor& x, const ForwardOptions& opts) {
  Tape tape(false);
  BoundModel b = bind_model(tape, model);
  return b.forward(tape.constant(x), opts).value();
}

}  // namespace pvckit
