#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cnmix::models {

// Self-describing checkpoint container: a JSON header describing named f32
// arrays followed by their raw little-endian data. See README for the exact
// byte layout.
struct CheckpointArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

struct Checkpoint {
  int version = 1;
  std::map<std::string, std::string> meta;
  std::vector<CheckpointArray> arrays;

  const CheckpointArray* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace cnmix::models
