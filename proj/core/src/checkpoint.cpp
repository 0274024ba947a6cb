#include "stereo/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace stereo {

namespace {
constexpr char kMagic[8] = {'S', 'M', 'C', 'K', 'P', 'T', '0', '1'};
}

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["dtype"] = "f32";
  manifest["meta"] = ckpt.meta;
  if (!ckpt.extra.is_null()) manifest["extra"] = ckpt.extra;
  auto& tensors = manifest["tensors"] = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& e : ckpt.entries) {
    tensors.push_back({{"name", e.name},
                       {"shape", e.shape},
                       {"offset", offset},
                       {"count", static_cast<int64_t>(e.values.size())}});
    offset += static_cast<int64_t>(e.values.size());
  }
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : ckpt.entries)
    out.write(reinterpret_cast<const char*>(e.values.data()),
              static_cast<std::streamsize>(e.values.size() * sizeof(float)));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file: " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint manifest: " + path);
  nlohmann::json manifest = nlohmann::json::parse(text);
  if (manifest.at("dtype").get<std::string>() != "f32")
    throw IoError("unsupported checkpoint dtype");

  Checkpoint ckpt;
  if (manifest.contains("meta"))
    ckpt.meta = manifest["meta"].get<std::map<std::string, int64_t>>();
  if (manifest.contains("extra")) ckpt.extra = manifest["extra"];
  for (const auto& t : manifest.at("tensors")) {
    Checkpoint::Entry e;
    e.name = t.at("name").get<std::string>();
    e.shape = t.at("shape").get<Shape>();
    e.values.resize(t.at("count").get<size_t>());
    ckpt.entries.push_back(std::move(e));
  }
  for (auto& e : ckpt.entries) {
    in.read(reinterpret_cast<char*>(e.values.data()),
            static_cast<std::streamsize>(e.values.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint payload: " + path);
  }
  return ckpt;
}

Checkpoint snapshot_params(const ParamStore<float>& params) {
  Checkpoint ckpt;
  for (const auto& [name, t] : params.items())
    ckpt.entries.push_back({name, t->shape, t->data});
  return ckpt;
}

void restore_params(ParamStore<float>& params, const Checkpoint& ckpt) {
  for (const auto& [name, t] : params.items()) {
    const auto* e = ckpt.find(name);
    if (!e) throw IoError("checkpoint missing parameter: " + name);
    if (e->shape != t->shape)
      throw IoError("checkpoint shape mismatch for " + name + ": " + shape_str(e->shape) +
                    " vs " + shape_str(t->shape));
    t->data = e->values;
  }
}

}  // namespace stereo
