#include "ssep/container.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace ssep::container {

namespace {
constexpr char kMagic[9] = "SSEPBIN1";
}

void write(const std::string& path, const Meta& meta, const std::vector<Blob>& blobs) {
  nlohmann::json header = meta.json;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& b : blobs) {
    dir.push_back({{"name", b.name},
                   {"dtype", b.dtype},
                   {"shape", b.shape},
                   {"bytes", b.bytes.size()}});
  }
  header["arrays"] = dir;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("container: cannot open for writing: " + path);
  out.write(kMagic, 8);
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), hs.size());
  for (const auto& b : blobs)
    out.write(reinterpret_cast<const char*>(b.bytes.data()), b.bytes.size());
  if (!out) throw std::runtime_error("container: write failed: " + path);
}

std::pair<Meta, std::vector<Blob>> read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("container: cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("container: bad magic in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  if (!in) throw std::runtime_error("container: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(hs);

  Meta meta;
  meta.json = header;
  meta.json.erase("arrays");
  std::vector<Blob> blobs;
  for (const auto& entry : header.at("arrays")) {
    Blob b;
    b.name = entry.at("name");
    b.dtype = entry.at("dtype");
    b.shape = entry.at("shape").get<Shape>();
    b.bytes.resize(entry.at("bytes").get<size_t>());
    in.read(reinterpret_cast<char*>(b.bytes.data()), b.bytes.size());
    if (!in) throw std::runtime_error("container: truncated payload in " + path);
    blobs.push_back(std::move(b));
  }
  return {std::move(meta), std::move(blobs)};
}

const Blob& find_blob(const std::vector<Blob>& blobs, const std::string& name) {
  for (const auto& b : blobs)
    if (b.name == name) return b;
  throw std::runtime_error("container: missing array '" + name + "'");
}

bool has_blob(const std::vector<Blob>& blobs, const std::string& name) {
  for (const auto& b : blobs)
    if (b.name == name) return true;
  return false;
}

}  // namespace ssep::container
