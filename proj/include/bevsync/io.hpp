#pragma once

#include "bevsync/core.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bevsync::io {

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t checksum(const std::vector<double>& v) {
  return fnv1a64(v.data(), v.size() * sizeof(double));
}

/// Named tensors with declared shapes, serialized as a checksummed
/// structured-text document.
class TensorStore {
 public:
  void put(const std::string& name, std::vector<int> shape,
           std::vector<double> data);
  void putMatrix(const std::string& name, const MatrixD& m);
  void putVector(const std::string& name, const VectorD& v);

  bool has(const std::string& name) const { return items_.count(name) > 0; }
  MatrixD getMatrix(const std::string& name) const;
  VectorD getVector(const std::string& name) const;
  double getScalar(const std::string& name) const;
  void putScalar(const std::string& name, double v);

  std::string serialize() const;
  static TensorStore deserialize(const std::string& text);

  void save(const std::string& path) const;
  static TensorStore load(const std::string& path);

 private:
  struct Entry {
    std::vector<int> shape;
    std::vector<double> data;
  };
  std::map<std::string, Entry> items_;
};

std::string readFile(const std::string& path);
void writeFile(const std::string& path, const std::string& content);

/// Fixed-format float used by all text outputs so runs are byte-comparable.
std::string formatDouble(double v);

}  // namespace bevsync::io
