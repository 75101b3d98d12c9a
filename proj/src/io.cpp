#include "bevsync/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bevsync::io {

using nlohmann::json;

void TensorStore::put(const std::string& name, std::vector<int> shape,
                      std::vector<double> data) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  require(n == data.size(), "tensor '" + name + "': shape does not match data");
  items_[name] = {std::move(shape), std::move(data)};
}

void TensorStore::putMatrix(const std::string& name, const MatrixD& m) {
  std::vector<double> data(m.size());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) data[r * m.cols() + c] = m(r, c);
  put(name, {static_cast<int>(m.rows()), static_cast<int>(m.cols())},
      std::move(data));
}

void TensorStore::putVector(const std::string& name, const VectorD& v) {
  put(name, {static_cast<int>(v.size())},
      std::vector<double>(v.data(), v.data() + v.size()));
}

void TensorStore::putScalar(const std::string& name, double v) {
  put(name, {1}, {v});
}

MatrixD TensorStore::getMatrix(const std::string& name) const {
  auto it = items_.find(name);
  require(it != items_.end(), "tensor '" + name + "' missing");
  require(it->second.shape.size() == 2, "tensor '" + name + "' is not a matrix");
  const int rows = it->second.shape[0], cols = it->second.shape[1];
  MatrixD m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = it->second.data[r * cols + c];
  return m;
}

VectorD TensorStore::getVector(const std::string& name) const {
  auto it = items_.find(name);
  require(it != items_.end(), "tensor '" + name + "' missing");
  require(it->second.shape.size() == 1, "tensor '" + name + "' is not a vector");
  return Eigen::Map<const VectorD>(it->second.data.data(),
                                   static_cast<long>(it->second.data.size()));
}

double TensorStore::getScalar(const std::string& name) const {
  auto it = items_.find(name);
  require(it != items_.end(), "tensor '" + name + "' missing");
  require(it->second.data.size() == 1, "tensor '" + name + "' is not a scalar");
  return it->second.data[0];
}

std::string TensorStore::serialize() const {
  json root;
  root["format"] = "tensors-v1";
  json tensors = json::array();
  for (const auto& [name, e] : items_) {
    json t;
    t["name"] = name;
    t["shape"] = e.shape;
    t["data"] = e.data;
    t["checksum"] = checksum(e.data);
    tensors.push_back(std::move(t));
  }
  root["tensors"] = std::move(tensors);
  return root.dump(2) + "\n";
}

TensorStore TensorStore::deserialize(const std::string& text) {
  TensorStore store;
  const json root = json::parse(text);
  require(root.value("format", "") == "tensors-v1", "unknown tensor file format");
  for (const auto& t : root.at("tensors")) {
    const std::string name = t.at("name");
    std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    std::vector<double> data = t.at("data").get<std::vector<double>>();
    const std::uint64_t want = t.at("checksum").get<std::uint64_t>();
    if (checksum(data) != want)
      throw std::runtime_error("tensor '" + name + "': checksum mismatch");
    store.put(name, std::move(shape), std::move(data));
  }
  return store;
}

void TensorStore::save(const std::string& path) const {
  writeFile(path, serialize());
}

TensorStore TensorStore::load(const std::string& path) {
  return deserialize(readFile(path));
}

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void writeFile(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::string formatDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace bevsync::io
