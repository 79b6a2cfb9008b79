#pragma once

// Named parameter store with checkpoint serialization.
//
// Checkpoint format (little-endian): magic "MSFA0001", u32 entry count, then
// per entry u32 name length, UTF-8 name bytes, u32 rank, u32 dims, float32
// payload row-major. Payloads are float32 on disk regardless of the in-memory
// scalar type.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "stackgrasp/tensor.hpp"

namespace stackgrasp {

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'F', 'A', '0', '0', '0', '1'};

template <typename T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> tensor;
    bool trainable = true;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> t, bool trainable = true) {
    if (entries_.count(name)) throw Error("duplicate parameter name: " + name);
    t.set_requires_grad(trainable);
    auto [it, ok] = entries_.emplace(name, Entry{std::move(t), trainable});
    order_.push_back(name);
    return it->second.tensor;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor<T>& get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("unknown parameter: " + name);
    return it->second.tensor;
  }
  const Tensor<T>& get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("unknown parameter: " + name);
    return it->second.tensor;
  }

  bool trainable(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("unknown parameter: " + name);
    return it->second.trainable;
  }
  void set_trainable(const std::string& name, bool v) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("unknown parameter: " + name);
    it->second.trainable = v;
    it->second.tensor.set_requires_grad(v);
  }

  // Freeze every parameter whose name starts with the prefix.
  void set_trainable_prefix(const std::string& prefix, bool v) {
    for (const auto& name : order_)
      if (name.rfind(prefix, 0) == 0) set_trainable(name, v);
  }

  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }

  size_t total_scalars() const {
    size_t n = 0;
    for (const auto& name : order_) n += entries_.at(name).tensor.numel();
    return n;
  }

  void zero_grads() {
    for (const auto& name : order_) entries_.at(name).tensor.zero_grad();
  }

  // p <- p - lr * grad for trainable entries; grads zeroed afterwards.
  void sgd_step(T lr) {
    for (const auto& name : order_) {
      Entry& e = entries_.at(name);
      if (e.trainable) {
        T* p = e.tensor.data();
        const std::vector<T>& g = e.tensor.grad();
        for (size_t i = 0; i < e.tensor.numel(); ++i) p[i] -= lr * g[i];
      }
      e.tensor.zero_grad();
    }
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open for writing: " + path);
    f.write(kCheckpointMagic, 8);
    write_u32(f, static_cast<uint32_t>(order_.size()));
    for (const auto& name : order_) {
      const Tensor<T>& t = entries_.at(name).tensor;
      write_u32(f, static_cast<uint32_t>(name.size()));
      f.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(f, static_cast<uint32_t>(t.shape().size()));
      for (int d : t.shape()) write_u32(f, static_cast<uint32_t>(d));
      const T* src = t.data();
      std::vector<float> buf(t.numel());
      for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(src[i]);
      f.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!f) throw CheckpointError("write failed: " + path);
  }

  // Loads values into already-registered parameters; names and shapes must
  // match the store exactly.
  void load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
      throw CheckpointError("bad magic in " + path);
    uint32_t count = read_u32(f, path);
    size_t seen = 0;
    for (uint32_t i = 0; i < count; ++i) {
      uint32_t name_len = read_u32(f, path);
      std::string name(name_len, '\0');
      f.read(name.data(), name_len);
      if (!f) throw CheckpointError("truncated name in " + path);
      uint32_t rank = read_u32(f, path);
      Shape shape(rank);
      for (uint32_t d = 0; d < rank; ++d)
        shape[d] = static_cast<int>(read_u32(f, path));
      size_t n = shape_numel(shape);
      std::vector<float> buf(n);
      f.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(n * sizeof(float)));
      if (!f) throw CheckpointError("truncated payload for '" + name + "' in " + path);

      auto it = entries_.find(name);
      if (it == entries_.end())
        throw CheckpointError("checkpoint entry '" + name + "' not in parameter store");
      Tensor<T>& t = it->second.tensor;
      if (t.shape() != shape)
        throw CheckpointError("shape mismatch for '" + name + "': store " +
                              shape_str(t.shape()) + " vs file " + shape_str(shape));
      T* dst = t.data();
      for (size_t j = 0; j < n; ++j) dst[j] = static_cast<T>(buf[j]);
      ++seen;
    }
    if (seen != order_.size())
      throw CheckpointError("checkpoint has " + std::to_string(seen) + " entries, store has " +
                            std::to_string(order_.size()));
  }

 private:
  static void write_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
  }
  static uint32_t read_u32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw CheckpointError("truncated header in " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }

  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;  // insertion order, for deterministic files
};

}  // namespace stackgrasp
