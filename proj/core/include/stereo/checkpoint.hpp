#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "stereo/params.hpp"
#include "stereo/tensor.hpp"

namespace stereo {

// Single-file parameter snapshot: a fixed magic, a JSON manifest listing
// (name, shape, offset, count) per tensor plus metadata, then the raw
// little-endian values. Round-trips bit-exactly.
struct Checkpoint {
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<float> values;
  };
  std::vector<Entry> entries;
  std::map<std::string, int64_t> meta;  // e.g. "step"
  nlohmann::json extra;                 // free-form payload (run config, notes)

  const Entry* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Convenience bridges for a ParamStore<float>.
Checkpoint snapshot_params(const ParamStore<float>& params);
void restore_params(ParamStore<float>& params, const Checkpoint& ckpt);

}  // namespace stereo
