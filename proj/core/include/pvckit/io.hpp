#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pvckit/network.hpp"
#include "pvckit/volume.hpp"

namespace pvckit {

// Volumes are stored as a JSON sidecar header plus a raw little-endian
// payload: f32 for activity volumes (<base>.json + <base>.raw), u16 for
// label maps. `base` is the path without extension.
void write_volume(const std::filesystem::path& base, const Volume& v);
Volume read_volume(const std::filesystem::path& base);
void write_labels(const std::filesystem::path& base, const TemplateSet& t);
TemplateSet read_labels(const std::filesystem::path& base);

// Versioned binary checkpoint: magic "PVCK", u32 version, a JSON metadata
// blob (network config, opaque train-config echo, step counter, RNG state),
// then named f64 tensors (parameters first, then Adam moments under the
// "adam." prefix). Round-trips bit-exactly.
struct Checkpoint {
  uint32_t version = 1;
  NetworkConfig network;
  std::string train_config_json;  // echo of the training configuration
  int64_t step = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the raw f64 bytes of the parameter tensors (names without the
// "adam." prefix), in stored order.
uint64_t checkpoint_param_hash(const Checkpoint& c);

// load a checkpoint's parameters into a freshly built model
Model model_from_checkpoint(const Checkpoint& c);
// parameters of `model` as checkpoint tensor entries
std::vector<std::pair<std::string, Tensor>> snapshot_parameters(const Model& model);

// RFC-4180 field quoting (only quotes when needed)
std::string csv_quote(const std::string& field);
// fixed shortest-roundtrip formatting used by every CSV/JSON writer so
// reruns are byte-identical
std::string format_double(double v);

std::string network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const std::string& text);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace pvckit
