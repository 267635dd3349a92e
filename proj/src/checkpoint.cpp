#include "xstft/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace xstft {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[6] = {'X', 'S', 'T', 'F', 'T', '1'};
constexpr uint32_t kVersion = 1;

size_t dtype_size(uint8_t dtype) {
  switch (dtype) {
    case 0: return 8;
    case 1: return 4;
    case 2: return 8;
    default: throw IoError("unknown checkpoint dtype code " + std::to_string(dtype));
  }
}

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated checkpoint file");
  return v;
}

}  // namespace

CheckpointEntry make_entry(const std::string& name, const Tensor<double>& t) {
  CheckpointEntry e;
  e.name = name;
  e.shape = t.shape();
  e.dtype = 0;
  e.bytes.resize(static_cast<size_t>(t.size()) * 8);
  std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
  return e;
}

CheckpointEntry make_entry(const std::string& name, const Tensor<float>& t) {
  CheckpointEntry e;
  e.name = name;
  e.shape = t.shape();
  e.dtype = 1;
  e.bytes.resize(static_cast<size_t>(t.size()) * 4);
  std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
  return e;
}

CheckpointEntry make_entry_u64(const std::string& name, const std::vector<uint64_t>& v) {
  CheckpointEntry e;
  e.name = name;
  e.shape = {static_cast<int64_t>(v.empty() ? 1 : v.size())};
  e.dtype = 2;
  e.bytes.resize(std::max<size_t>(v.size(), 1) * 8, 0);
  if (!v.empty()) std::memcpy(e.bytes.data(), v.data(), v.size() * 8);
  return e;
}

template <class S>
Tensor<S> entry_to_tensor(const CheckpointEntry& e) {
  constexpr uint8_t want = sizeof(S) == 8 ? 0 : 1;
  XSTFT_CHECK(e.dtype == want, "checkpoint entry '" + e.name + "' has a different dtype");
  Tensor<S> t(e.shape);
  XSTFT_CHECK(e.bytes.size() == static_cast<size_t>(t.size()) * sizeof(S),
              "checkpoint entry '" + e.name + "' has a truncated payload");
  std::memcpy(t.data(), e.bytes.data(), e.bytes.size());
  return t;
}

template Tensor<double> entry_to_tensor<double>(const CheckpointEntry&);
template Tensor<float> entry_to_tensor<float>(const CheckpointEntry&);

std::vector<uint64_t> entry_to_u64(const CheckpointEntry& e) {
  XSTFT_CHECK(e.dtype == 2, "checkpoint entry '" + e.name + "' is not u64");
  std::vector<uint64_t> v(e.bytes.size() / 8);
  std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
  return v;
}

void write_checkpoint_file(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put<uint32_t>(os, kVersion);
  put<uint64_t>(os, entries.size());
  for (const auto& e : entries) {
    put<uint32_t>(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<uint8_t>(os, e.dtype);
    put<uint32_t>(os, static_cast<uint32_t>(e.shape.size()));
    for (int64_t d : e.shape) put<uint64_t>(os, static_cast<uint64_t>(d));
    put<uint64_t>(os, e.bytes.size());
    os.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

std::vector<CheckpointEntry> read_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, kMagic, 6) != 0) throw IoError("not a checkpoint file: " + path);
  const uint32_t version = get<uint32_t>(is);
  if (version != kVersion) throw IoError("unsupported checkpoint version");
  const uint64_t count = get<uint64_t>(is);
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const uint32_t name_len = get<uint32_t>(is);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    e.dtype = get<uint8_t>(is);
    const uint32_t rank = get<uint32_t>(is);
    for (uint32_t d = 0; d < rank; ++d) e.shape.push_back(static_cast<int64_t>(get<uint64_t>(is)));
    const uint64_t nbytes = get<uint64_t>(is);
    if (nbytes != static_cast<uint64_t>(shape_volume(e.shape)) * dtype_size(e.dtype))
      throw IoError("checkpoint entry '" + e.name + "' payload size mismatch");
    e.bytes.resize(nbytes);
    is.read(reinterpret_cast<char*>(e.bytes.data()), static_cast<std::streamsize>(nbytes));
    if (!is) throw IoError("truncated checkpoint file");
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace xstft
