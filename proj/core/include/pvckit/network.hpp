#pragma once

#include <string>
#include <vector>

#include "pvckit/dynconv.hpp"

namespace pvckit {

// The six paper variants map onto flags: dynamic_enabled=false gives the
// plain U-net; dynamic_enabled without dc_dy_enabled gives Dy-U;
// input_channels=2 gives the -CT twins; the IMBV loss weight selects -BV.
struct NetworkConfig {
  int64_t input_channels = 1;  // 1 or 2
  int64_t filters = 32;
  int64_t down_up_blocks = 4;
  int64_t dense_layers_per_block = 2;
  std::array<int64_t, 3> sampling_kernel{1, 3, 3};  // valid (no padding)
  std::array<int64_t, 3> dense_kernel{5, 3, 3};     // zero-padded
  bool dc_dy_enabled = true;
  bool dynamic_enabled = true;
  std::array<int64_t, 3> input_dims{50, 70, 70};  // D,H,W used for build-time validation
};

// throws ConfigError naming the failing block when the shape arithmetic
// (valid convs shrinking H,W by 2 per block) cannot work out
void validate_config(const NetworkConfig& cfg);

struct Model {
  NetworkConfig config;
  std::vector<std::string> layer_names;  // forward order
  std::vector<DynConvLayer> layers;

  // every trainable tensor exactly once, in forward order
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
  int64_t parameter_count() const;
  Tensor* find_parameter(const std::string& name);
};

// Deterministic for a given seed: Xavier-uniform kernels, zero biases.
Model build(const NetworkConfig& cfg, uint64_t seed);

struct ForwardOptions {
  bool force_attention_one = false;
};

// Model parameters registered on a tape plus the wiring to run it.
struct BoundModel {
  const Model* model = nullptr;
  std::vector<BoundDynConvLayer> layers;
  std::vector<std::pair<std::string, Var>> params;

  Var forward(Var x, const ForwardOptions& opts = {}) const;
};

BoundModel bind_model(Tape& tape, const Model& model);

// gradient-free convenience on a private tape
Tensor forward_nograd(const Model& model, const Tensor& x, const ForwardOptions& opts = {});

}  // namespace pvckit
