#include "cnmix/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cnmix::models {

namespace {

constexpr char kMagic[8] = {'C', 'N', 'M', 'X', 'C', 'K', 'P', '1'};

void require(bool ok, const std::string& message) {
  if (!ok) throw std::runtime_error(message);
}

} // namespace

const CheckpointArray* Checkpoint::find(const std::string& name) const {
  for (const CheckpointArray& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json header;
  header["version"] = ckpt.version;
  header["meta"] = ckpt.meta;
  header["arrays"] = nlohmann::json::array();

  std::uint64_t offset = 0;
  for (const CheckpointArray& a : ckpt.arrays) {
    nlohmann::json entry;
    entry["name"] = a.name;
    entry["dtype"] = "f32";
    entry["shape"] = a.shape;
    entry["offset"] = offset;
    entry["nbytes"] = a.data.size() * sizeof(float);
    header["arrays"].push_back(entry);
    offset += a.data.size() * sizeof(float);
  }

  const std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open checkpoint '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const CheckpointArray& a : ckpt.arrays)
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(float)));
  require(out.good(), "failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint '" + path + "'");

  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.good() && std::equal(magic, magic + 8, kMagic),
          "'" + path + "' is not a checkpoint file");

  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  require(in.good(), "truncated checkpoint header in '" + path + "'");

  const nlohmann::json header = nlohmann::json::parse(header_text);
  Checkpoint ckpt;
  ckpt.version = header.at("version").get<int>();
  ckpt.meta = header.at("meta").get<std::map<std::string, std::string>>();

  for (const nlohmann::json& entry : header.at("arrays")) {
    CheckpointArray a;
    a.name = entry.at("name").get<std::string>();
    require(entry.at("dtype").get<std::string>() == "f32",
            "unsupported dtype in checkpoint '" + path + "'");
    a.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const std::uint64_t nbytes = entry.at("nbytes").get<std::uint64_t>();
    a.data.resize(nbytes / sizeof(float));
    ckpt.arrays.push_back(std::move(a));
  }
  for (CheckpointArray& a : ckpt.arrays) {
    in.read(reinterpret_cast<char*>(a.data.data()),
            static_cast<std::streamsize>(a.data.size() * sizeof(float)));
    require(in.good(), "truncated array data in '" + path + "'");
  }
  return ckpt;
}

} // namespace cnmix::models
