#ifndef SSEP_CONTAINER_HPP
#define SSEP_CONTAINER_HPP

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssep/array.hpp"

namespace ssep::container {

// Binary container: magic "SSEPBIN1", u64 little-endian header length, the
// header JSON (metadata plus an array directory with dtype/shape/byte
// counts), then the raw array payloads in directory order. x86 little-endian
// layout is written as-is. See FORMATS.md.

struct Meta {
  nlohmann::json json;
};

struct Blob {
  std::string name;
  std::string dtype;  // "f32" | "f64"
  Shape shape;
  std::vector<unsigned char> bytes;
};

void write(const std::string& path, const Meta& meta, const std::vector<Blob>& blobs);
std::pair<Meta, std::vector<Blob>> read(const std::string& path);

const Blob& find_blob(const std::vector<Blob>& blobs, const std::string& name);
bool has_blob(const std::vector<Blob>& blobs, const std::string& name);

template <typename T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() {
  return "f32";
}
template <>
inline const char* dtype_name<double>() {
  return "f64";
}

template <typename T>
Blob blob_from_array(const std::string& name, const Array<T>& a) {
  Blob b;
  b.name = name;
  b.dtype = dtype_name<T>();
  b.shape = a.shape();
  b.bytes.resize(a.size() * sizeof(T));
  std::memcpy(b.bytes.data(), a.data(), b.bytes.size());
  return b;
}

template <typename T>
Array<T> array_from_blob(const Blob& b) {
  if (b.dtype != dtype_name<T>())
    throw std::runtime_error("container: blob '" + b.name + "' has dtype " + b.dtype);
  Array<T> a(b.shape);
  if (b.bytes.size() != static_cast<size_t>(a.size()) * sizeof(T))
    throw std::runtime_error("container: blob '" + b.name + "' size mismatch");
  std::memcpy(a.data(), b.bytes.data(), b.bytes.size());
  return a;
}

}  // namespace ssep::container

#endif  // SSEP_CONTAINER_HPP
