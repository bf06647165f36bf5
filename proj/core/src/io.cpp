#include "pvckit/io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace pvckit {

namespace {

using nlohmann::json;

void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("unexpected end of file");
  return v;
}

json header_json(const std::array<int64_t, 3>& dims, const std::array<double, 3>& spacing,
                 const char* dtype, bool label_map) {
  return json{{"dims", dims}, {"spacing_mm", spacing}, {"dtype", dtype}, {"label_map", label_map}};
}

json parse_header(const std::filesystem::path& base) {
  std::filesystem::path hp = base;
  hp += ".json";
  std::ifstream is(hp);
  if (!is) throw IoError("cannot open header " + hp.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed header " + hp.string() + ": " + e.what());
  }
  return j;
}

std::vector<char> read_payload(const std::filesystem::path& base, size_t expected_bytes) {
  std::filesystem::path rp = base;
  rp += ".raw";
  std::ifstream is(rp, std::ios::binary);
  if (!is) throw IoError("cannot open payload " + rp.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() != expected_bytes)
    throw IoError("payload length " + std::to_string(buf.size()) + " does not match header (" +
                  std::to_string(expected_bytes) + " bytes expected) in " + rp.string());
  return buf;
}

}  // namespace

void write_volume(const std::filesystem::path& base, const Volume& v) {
  v.validate();
  std::filesystem::path hp = base, rp = base;
  hp += ".json";
  rp += ".raw";
  write_text_file(hp, header_json(v.dims, v.spacing_mm, "f32", false).dump(2) + "\n");
  std::ofstream os(rp, std::ios::binary);
  if (!os) throw IoError("cannot write " + rp.string());
  for (double d : v.data) write_pod<float>(os, static_cast<float>(d));
}

Volume read_volume(const std::filesystem::path& base) {
  const json j = parse_header(base);
  if (j.value("dtype", "") != "f32" || j.value("label_map", false))
    throw IoError("not an f32 volume: " + base.string());
  Volume v(j.at("dims").get<std::array<int64_t, 3>>(),
           j.at("spacing_mm").get<std::array<double, 3>>());
  const auto buf = read_payload(base, static_cast<size_t>(v.size()) * sizeof(float));
  const float* p = reinterpret_cast<const float*>(buf.data());
  for (int64_t i = 0; i < v.size(); ++i) v.data[static_cast<size_t>(i)] = static_cast<double>(p[i]);
  v.validate();
  return v;
}

void write_labels(const std::filesystem::path& base, const TemplateSet& t) {
  t.validate();
  std::filesystem::path hp = base, rp = base;
  hp += ".json";
  rp += ".raw";
  write_text_file(hp, header_json(t.dims, t.spacing_mm, "u16", true).dump(2) + "\n");
  std::ofstream os(rp, std::ios::binary);
  if (!os) throw IoError("cannot write " + rp.string());
  for (uint16_t l : t.labels) write_pod<uint16_t>(os, l);
}

TemplateSet read_labels(const std::filesystem::path& base) {
  const json j = parse_header(base);
  if (j.value("dtype", "") != "u16" || !j.value("label_map", false))
    throw IoError("not a u16 label map: " + base.string());
  TemplateSet t(j.at("dims").get<std::array<int64_t, 3>>(),
                j.at("spacing_mm").get<std::array<double, 3>>());
  const auto buf = read_payload(base, static_cast<size_t>(t.size()) * sizeof(uint16_t));
  std::memcpy(t.labels.data(), buf.data(), buf.size());
  t.validate();
  return t;
}

// ---- network config <-> json ---------------------------------------------------

std::string network_config_to_json(const NetworkConfig& cfg) {
  json j{{"input_channels", cfg.input_channels},
         {"filters", cfg.filters},
         {"down_up_blocks", cfg.down_up_blocks},
         {"dense_layers_per_block", cfg.dense_layers_per_block},
         {"sampling_kernel", cfg.sampling_kernel},
         {"dense_kernel", cfg.dense_kernel},
         {"dc_dy_enabled", cfg.dc_dy_enabled},
         {"dynamic_enabled", cfg.dynamic_enabled},
         {"input_dims", cfg.input_dims}};
  return j.dump();
}

NetworkConfig network_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed network config: ") + e.what());
  }
  NetworkConfig cfg;
  cfg.input_channels = j.value("input_channels", cfg.input_channels);
  cfg.filters = j.value("filters", cfg.filters);
  cfg.down_up_blocks = j.value("down_up_blocks", cfg.down_up_blocks);
  cfg.dense_layers_per_block = j.value("dense_layers_per_block", cfg.dense_layers_per_block);
  cfg.sampling_kernel = j.value("sampling_kernel", cfg.sampling_kernel);
  cfg.dense_kernel = j.value("dense_kernel", cfg.dense_kernel);
  cfg.dc_dy_enabled = j.value("dc_dy_enabled", cfg.dc_dy_enabled);
  cfg.dynamic_enabled = j.value("dynamic_enabled", cfg.dynamic_enabled);
  cfg.input_dims = j.value("input_dims", cfg.input_dims);
  return cfg;
}

// ---- checkpoints ------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'P', 'V', 'C', 'K'};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  write_bytes(os, kMagic, 4);
  write_pod<uint32_t>(os, c.version);
  const json meta{{"network", json::parse(network_config_to_json(c.network))},
                  {"train_config", c.train_config_json},
                  {"step", c.step},
                  {"rng_state", c.rng_state}};
  const std::string meta_s = meta.dump();
  write_pod<uint64_t>(os, meta_s.size());
  write_bytes(os, meta_s.data(), meta_s.size());
  write_pod<uint64_t>(os, c.tensors.size());
  for (const auto& [name, t] : c.tensors) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    write_bytes(os, name.data(), name.size());
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape()) write_pod<int64_t>(os, d);
    write_bytes(os, t.data(), static_cast<size_t>(t.size()) * sizeof(double));
  }
  if (!os) throw IoError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad checkpoint magic in " + path.string());
  Checkpoint c;
  c.version = read_pod<uint32_t>(is);
  if (c.version != 1) throw IoError("unsupported checkpoint version " + std::to_string(c.version));
  const uint64_t meta_len = read_pod<uint64_t>(is);
  std::string meta_s(meta_len, '\0');
  is.read(meta_s.data(), static_cast<std::streamsize>(meta_len));
  if (!is) throw IoError("truncated checkpoint metadata");
  json meta;
  try {
    meta = json::parse(meta_s);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  c.network = network_config_from_json(meta.at("network").dump());
  c.train_config_json = meta.value("train_config", "");
  c.step = meta.value("step", int64_t{0});
  c.rng_state = meta.value("rng_state", "");
  const uint64_t count = read_pod<uint64_t>(is);
  c.tensors.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t ndim = read_pod<uint32_t>(is);
    Shape shape(ndim);
    for (uint32_t a = 0; a < ndim; ++a) shape[a] = read_pod<int64_t>(is);
    std::vector<double> data(static_cast<size_t>(numel(shape)));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw IoError("truncated tensor payload for " + name);
    c.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return c;
}

uint64_t checkpoint_param_hash(const Checkpoint& c) {
  uint64_t h = 1469598103934665603ull;  // FNV offset basis
  auto mix = [&h](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : c.tensors) {
    if (name.rfind("adam.", 0) == 0) continue;
    mix(name.data(), name.size());
    mix(t.data(), static_cast<size_t>(t.size()) * sizeof(double));
  }
  return h;
}

Model model_from_checkpoint(const Checkpoint& c) {
  Model m = build(c.network, 0);
  for (auto& [name, t] : m.parameters()) {
    bool found = false;
    for (const auto& [cn, ct] : c.tensors) {
      if (cn == name) {
        if (ct.shape() != t->shape())
          throw IoError("checkpoint tensor " + name + " has shape " + shape_str(ct.shape()) +
                        ", model expects " + shape_str(t->shape()));
        *t = ct;
        found = true;
        break;
      }
    }
    if (!found) throw IoError("checkpoint is missing parameter " + name);
  }
  return m;
}

std::vector<std::pair<std::string, Tensor>> snapshot_parameters(const Model& model) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, t] : model.parameters()) out.emplace_back(name, t->clone());
  return out;
}

// ---- text helpers ---------------------------------------------------------------

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += "\"\"";
    else out += ch;
  }
  out += "\"";
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("short write to " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace pvckit
