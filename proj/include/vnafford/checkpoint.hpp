#pragma once

// Model checkpoint container: magic, a JSON manifest (architecture plus the
// array directory), then raw little-endian float32 array data, column-major,
// in directory order. Storage is always float32 regardless of the in-memory
// scalar type, so float and double models loaded from one file share
// identical parameter values and the file round-trips bit-exactly.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vnafford/errors.hpp"
#include "vnafford/heads.hpp"

namespace vnaff {

inline constexpr char kCheckpointMagic[8] = {'V', 'N', 'A', 'F', 'C', 'K', 'P', 'T'};

template <typename S>
void save_model(Model<S>& model, const std::string& path) {
  const ModelConfig& cfg = model.config();
  nlohmann::json manifest;
  manifest["format"] = "vnafford-ckpt";
  manifest["version"] = 1;
  manifest["precision"] = "float32";
  manifest["encoder"] = to_string(cfg.kind);
  manifest["primitive"] = to_string(cfg.primitive);
  manifest["k_nn"] = cfg.enc.k_nn;
  manifest["d"] = cfg.enc.d;
  manifest["d_inv"] = cfg.enc.d_inv;
  manifest["depth"] = cfg.enc.depth;
  manifest["d_z"] = cfg.d_z;
  manifest["hidden"] = cfg.hidden;
  manifest["gate_hidden"] = cfg.gate_hidden;
  nlohmann::json arrays = nlohmann::json::array();
  for (const Param<S>* p : model.params()) {
    arrays.push_back({{"name", p->name}, {"rows", p->w.rows()}, {"cols", p->w.cols()}});
  }
  manifest["arrays"] = arrays;
  std::string head = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot open for writing: " + path);
  out.write(kCheckpointMagic, 8);
  std::uint64_t len = head.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(head.data(), std::streamsize(head.size()));
  std::vector<float> buf;
  for (const Param<S>* p : model.params()) {
    buf.resize(size_t(p->w.size()));
    for (Eigen::Index i = 0; i < p->w.size(); ++i) buf[size_t(i)] = float(p->w.data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
  }
  if (!out) throw LoadError("write failed: " + path);
}

inline nlohmann::json read_checkpoint_manifest(std::ifstream& in, const std::string& path) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw LoadError("not a checkpoint file: " + path);
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), 8) || len == 0 || len > (1u << 26))
    throw LoadError("corrupt manifest length: " + path);
  std::string head(len, '\0');
  if (!in.read(head.data(), std::streamsize(len))) throw LoadError("truncated manifest: " + path);
  nlohmann::json manifest = nlohmann::json::parse(head, nullptr, false);
  if (manifest.is_discarded()) throw LoadError("manifest is not valid JSON: " + path);
  if (manifest.value("format", "") != "vnafford-ckpt")
    throw LoadError("bad format field in checkpoint: " + path);
  return manifest;
}

template <typename S>
void load_model(const std::string& path, Model<S>& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint: " + path);
  nlohmann::json manifest = read_checkpoint_manifest(in, path);

  ModelConfig cfg;
  try {
    cfg.kind = encoder_kind_from_string(manifest.at("encoder").get<std::string>());
    cfg.primitive = primitive_from_string(manifest.at("primitive").get<std::string>());
    cfg.enc.k_nn = manifest.at("k_nn").get<int>();
    cfg.enc.d = manifest.at("d").get<int>();
    cfg.enc.d_inv = manifest.at("d_inv").get<int>();
    cfg.enc.depth = manifest.at("depth").get<int>();
    cfg.d_z = manifest.at("d_z").get<int>();
    cfg.hidden = manifest.at("hidden").get<int>();
    cfg.gate_hidden = manifest.at("gate_hidden").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint manifest missing field: ") + e.what());
  }

  model.setup(cfg, 0);
  const auto& arrays = manifest.at("arrays");
  if (arrays.size() != model.params().size())
    throw LoadError("checkpoint array count " + std::to_string(arrays.size()) +
                    " does not match model (" + std::to_string(model.params().size()) + ")");
  std::vector<float> buf;
  for (size_t i = 0; i < model.params().size(); ++i) {
    Param<S>* p = model.params()[i];
    const auto& a = arrays[i];
    if (a.at("name").get<std::string>() != p->name)
      throw LoadError("checkpoint array order mismatch at '" + a.at("name").get<std::string>() +
                      "', expected '" + p->name + "'");
    if (a.at("rows").get<Eigen::Index>() != p->w.rows() || a.at("cols").get<Eigen::Index>() != p->w.cols())
      throw LoadError("checkpoint shape mismatch for '" + p->name + "'");
    buf.resize(size_t(p->w.size()));
    if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(float))))
      throw LoadError("truncated array data at '" + p->name + "'");
    for (Eigen::Index j = 0; j < p->w.size(); ++j) p->w.data()[j] = S(buf[size_t(j)]);
  }
}

}  // namespace vnaff
