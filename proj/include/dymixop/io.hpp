#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dymixop/dataset.hpp"
#include "dymixop/model.hpp"
#include "dymixop/training.hpp"

namespace dymixop::io {

static_assert(std::endian::native == std::endian::little, "the file formats assume a little-endian host");

using json = nlohmann::json;

inline constexpr std::uint32_t format_version = 1;
inline constexpr char dataset_magic[] = "DMXD";
inline constexpr char checkpoint_magic[] = "DMXC";

template <typename T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

inline std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  fail(ErrorKind::io, "unsupported dtype '" + dtype + "'");
}

/// magic, u32 header length, JSON header with sorted keys, raw payload.
/// The file is written beside its destination and renamed into place.
inline void write_container(const std::string& path, const char* magic, const json& header, const std::string& payload) {
  const std::string text = header.dump();
  const auto length = static_cast<std::uint32_t>(text.size());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::io, "cannot write '" + tmp + "'");
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&length), 4);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.flush();
    require(out.good(), ErrorKind::io, "failed writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::io, "cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

struct Container {
  json header;
  std::string payload;
};

inline Container read_container(const std::string& path, const char* magic) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(bytes.size() >= 8 && bytes.compare(0, 4, magic, 4) == 0, ErrorKind::io,
          "'" + path + "' is not a " + std::string(magic, 4) + " file");
  std::uint32_t length = 0;
  std::memcpy(&length, bytes.data() + 4, 4);
  require(bytes.size() >= 8 + static_cast<std::size_t>(length), ErrorKind::io, "'" + path + "': truncated header");
  Container c;
  try {
    c.header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + length);
  } catch (const json::exception& e) {
    fail(ErrorKind::io, "'" + path + "': bad header: " + e.what());
  }
  c.payload = bytes.substr(8 + length);
  const auto version = c.header.value("format_version", 0u);
  require(version == format_version, ErrorKind::io,
          "'" + path + "': format version " + std::to_string(version) + " is not supported");
  return c;
}

template <typename T>
void append_values(std::string& payload, const Tensor<T>& t) {
  payload.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(T));
}

/// Reads `count` scalars stored as `dtype` at byte `offset`, converting to T.
template <typename T>
std::vector<T> read_values(const std::string& payload, std::size_t offset, std::size_t count, const std::string& dtype) {
  const std::size_t width = dtype_size(dtype);
  require(offset + count * width <= payload.size(), ErrorKind::io, "payload shorter than its header describes");
  std::vector<T> out(count);
  const char* src = payload.data() + offset;
  for (std::size_t i = 0; i < count; ++i) {
    if (width == 4) {
      float v;
      std::memcpy(&v, src + 4 * i, 4);
      out[i] = static_cast<T>(v);
    } else {
      double v;
      std::memcpy(&v, src + 8 * i, 8);
      out[i] = static_cast<T>(v);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

template <typename T>
void save_dataset(const std::string& path, const TrajectoryDataset<T>& ds) {
  ds.validate();
  json h;
  h["format_version"] = format_version;
  h["kind"] = "dataset";
  h["pde"] = ds.pde;
  h["map"] = ds.is_map;
  h["shape"] = ds.data.shape();
  h["dtype"] = dtype_name<T>();
  h["channels"] = ds.channel_names;
  h["split"] = ds.split;
  h["spec"] = ds.spec;
  std::string payload;
  append_values(payload, ds.data);
  write_container(path, dataset_magic, h, payload);
}

template <typename T = double>
TrajectoryDataset<T> load_dataset(const std::string& path) {
  auto c = read_container(path, dataset_magic);
  TrajectoryDataset<T> ds;
  try {
    require(c.header.at("kind") == "dataset", ErrorKind::io, "'" + path + "' does not hold a dataset");
    ds.pde = c.header.at("pde").get<std::string>();
    ds.is_map = c.header.at("map").get<bool>();
    const auto shape = c.header.at("shape").get<Shape>();
    const auto dtype = c.header.at("dtype").get<std::string>();
    require(c.payload.size() == shape_numel(shape) * dtype_size(dtype), ErrorKind::io,
            "'" + path + "': payload size does not match shape " + shape_str(shape));
    ds.data = Tensor<T>(shape, read_values<T>(c.payload, 0, shape_numel(shape), dtype));
    ds.channel_names = c.header.at("channels").get<std::vector<std::string>>();
    ds.split = c.header.at("split").get<std::vector<std::string>>();
    ds.spec = c.header.at("spec").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::io, "'" + path + "': malformed dataset header: " + e.what());
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline json to_json(const ModelConfig& m) {
  return json{{"channels", m.channels},
              {"history", m.history},
              {"width", m.width},
              {"depth", m.depth},
              {"n_linear", m.n_linear},
              {"n_nonlinear", m.n_nonlinear},
              {"modes", m.modes},
              {"activation", m.activation == Activation::gelu ? "gelu" : "tanh"},
              {"final_activation", m.final_activation},
              {"spectral_diag", m.spectral_diag},
              {"nonlinear_kind", static_cast<int>(m.nonlinear_kind)},
              {"stack", static_cast<int>(m.stack)},
              {"seed", m.seed}};
}

inline ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.channels = j.at("channels");
  m.history = j.at("history");
  m.width = j.at("width");
  m.depth = j.at("depth");
  m.n_linear = j.at("n_linear");
  m.n_nonlinear = j.at("n_nonlinear");
  m.modes = j.at("modes").get<std::vector<std::size_t>>();
  m.activation = j.at("activation") == "gelu" ? Activation::gelu : Activation::tanh;
  m.final_activation = j.at("final_activation");
  m.spectral_diag = j.at("spectral_diag");
  m.nonlinear_kind = static_cast<MixKind>(j.at("nonlinear_kind").get<int>());
  m.stack = static_cast<StackMode>(j.at("stack").get<int>());
  m.seed = j.at("seed");
  m.validate();
  return m;
}

inline json to_json(const NormStats& s) { return json{{"min", s.min}, {"max", s.max}}; }

inline NormStats norm_from_json(const json& j) {
  return {j.at("min").get<std::vector<double>>(), j.at("max").get<std::vector<double>>()};
}

/// Everything needed to rebuild a model and continue training it.
template <typename T>
struct Checkpoint {
  ModelConfig model;
  std::map<std::string, std::string> run;  // run configuration as key-value text
  std::map<std::string, Tensor<T>> tensors;  // parameters and "adam.m/<id>", "adam.v/<id>"
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  NormStats input_norm;
  NormStats target_norm;
};

template <typename T>
Checkpoint<T> make_checkpoint(const DyMixOpModel<T>& model, const OptimizerState<T>& state,
                              std::map<std::string, std::string> run, NormStats input_norm, NormStats target_norm) {
  Checkpoint<T> c{model.config(), std::move(run), {}, state.step, state.epoch, state.lr, std::move(input_norm),
                  std::move(target_norm)};
  for (const auto& p : model.parameters()) c.tensors[p.id] = p.value();
  for (const auto& [id, m] : state.m) c.tensors["adam.m/" + id] = m;
  for (const auto& [id, v] : state.v) c.tensors["adam.v/" + id] = v;
  return c;
}

/// Copies parameter values and optimizer moments out of a checkpoint.
template <typename T>
void restore(const Checkpoint<T>& c, DyMixOpModel<T>& model, OptimizerState<T>& state) {
  for (auto& p : model.parameters()) {
    auto it = c.tensors.find(p.id);
    require(it != c.tensors.end(), ErrorKind::io, "checkpoint lacks parameter '" + p.id + "'");
    require(it->second.same_layout(p.value()), ErrorKind::shape, "checkpoint parameter '" + p.id + "' has shape " +
                                                                     shape_str(it->second.shape()) + ", model expects " +
                                                                     shape_str(p.value().shape()));
    p.value() = it->second;
  }
  state = OptimizerState<T>{};
  for (const auto& [name, t] : c.tensors) {
    if (name.starts_with("adam.m/")) state.m[name.substr(7)] = t;
    else if (name.starts_with("adam.v/")) state.v[name.substr(7)] = t;
    else require(model.has_parameter(name), ErrorKind::io, "checkpoint entry '" + name + "' is not a model parameter");
  }
  state.step = c.step;
  state.epoch = c.epoch;
  state.lr = c.lr;
}

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& c) {
  json h;
  h["format_version"] = format_version;
  h["kind"] = "checkpoint";
  h["dtype"] = dtype_name<T>();
  h["model"] = to_json(c.model);
  h["run"] = c.run;
  h["step"] = c.step;
  h["epoch"] = c.epoch;
  h["lr"] = c.lr;
  h["norm"] = {{"input", to_json(c.input_norm)}, {"target", to_json(c.target_norm)}};
  json entries = json::array();
  std::string payload;
  for (const auto& [name, t] : c.tensors) {
    entries.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"complex", t.is_complex()},
                       {"offset", payload.size()},
                       {"count", t.size()}});
    append_values(payload, t);
  }
  h["entries"] = entries;
  write_container(path, checkpoint_magic, h, payload);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  auto f = read_container(path, checkpoint_magic);
  Checkpoint<T> c;
  try {
    const auto& h = f.header;
    require(h.at("kind") == "checkpoint", ErrorKind::io, "'" + path + "' does not hold a checkpoint");
    const auto dtype = h.at("dtype").get<std::string>();
    c.model = model_from_json(h.at("model"));
    c.run = h.at("run").get<std::map<std::string, std::string>>();
    c.step = h.at("step");
    c.epoch = h.at("epoch");
    c.lr = h.at("lr");
    c.input_norm = norm_from_json(h.at("norm").at("input"));
    c.target_norm = norm_from_json(h.at("norm").at("target"));
    for (const auto& e : h.at("entries")) {
      const auto shape = e.at("shape").get<Shape>();
      const bool complex = e.at("complex");
      const std::size_t count = e.at("count");
      require(count == shape_numel(shape) * (complex ? 2 : 1), ErrorKind::io, "'" + path + "': entry count mismatch");
      c.tensors[e.at("name").get<std::string>()] =
          Tensor<T>(shape, read_values<T>(f.payload, e.at("offset"), count, dtype), complex);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::io, "'" + path + "': malformed checkpoint header: " + e.what());
  }
  return c;
}

/// Raw frames (steps, channels, grid...) from a rollout; `steps` may be zero.
template <typename T>
void save_prediction(const std::string& path, const Shape& shape, const Tensor<T>& frames, const json& meta) {
  json h = meta;
  h["format_version"] = format_version;
  h["kind"] = "prediction";
  h["shape"] = shape;
  h["dtype"] = dtype_name<T>();
  std::string payload;
  if (!frames.empty()) {
    require(frames.size() == shape_numel(shape), ErrorKind::shape, "prediction: frames do not match shape " + shape_str(shape));
    append_values(payload, frames);
  }
  write_container(path, dataset_magic, h, payload);
}

}  // namespace dymixop::io
