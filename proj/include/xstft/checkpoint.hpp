#ifndef XSTFT_CHECKPOINT_HPP_
#define XSTFT_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "xstft/tensor.hpp"

namespace xstft {

// Single-file container: magic "XSTFT1", a manifest of (name, shape, dtype)
// and raw little-endian payloads. Byte-stable for identical contents.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  uint8_t dtype = 0;  // 0 = f64, 1 = f32, 2 = u64
  std::vector<uint8_t> bytes;

  int64_t element_count() const { return shape_volume(shape); }
};

CheckpointEntry make_entry(const std::string& name, const Tensor<double>& t);
CheckpointEntry make_entry(const std::string& name, const Tensor<float>& t);
CheckpointEntry make_entry_u64(const std::string& name, const std::vector<uint64_t>& v);

template <class S>
Tensor<S> entry_to_tensor(const CheckpointEntry& e);
std::vector<uint64_t> entry_to_u64(const CheckpointEntry& e);

void write_checkpoint_file(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint_file(const std::string& path);

}  // namespace xstft

#endif  // XSTFT_CHECKPOINT_HPP_
