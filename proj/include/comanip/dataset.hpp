#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "comanip/error.hpp"
#include "comanip/tensor.hpp"

namespace comanip {

// One supervised pair: a wrench history window split into force and torque
// groups (each T x 6: both sensors' three axes), and the follower-frame
// velocity labels for the next H frames (H x 3).
struct TrainingSample {
  Tensor wrench_f;  // (T, 6)
  Tensor wrench_t;  // (T, 6)
  Tensor label;     // (H, 3)
  int32_t primitive = -1;
  double payload = 0.0;
};

namespace detail {

constexpr char kDatasetMagic[4] = {'C', 'M', 'D', 'S'};
constexpr uint32_t kDatasetVersion = 1;

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("dataset file truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

inline uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("dataset file truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_tensor(std::ostream& os, const Tensor& t) {
  put_u32(os, static_cast<uint32_t>(t.shape.size()));
  for (int d : t.shape) put_u32(os, static_cast<uint32_t>(d));
  for (double v : t.data) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
  }
}

inline Tensor get_tensor(std::istream& is) {
  const uint32_t rank = get_u32(is);
  if (rank > 8) throw IoError("dataset tensor rank implausible");
  Shape s(rank);
  for (auto& d : s) d = static_cast<int>(get_u32(is));
  Tensor t(s);
  for (double& v : t.data) {
    const uint64_t bits = get_u64(is);
    std::memcpy(&v, &bits, 8);
  }
  return t;
}

}  // namespace detail

// Little-endian binary container; bit-exact round trip.
inline void save_dataset(const std::string& path, const std::vector<TrainingSample>& samples,
                         uint64_t config_hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(detail::kDatasetMagic, 4);
  detail::put_u32(os, detail::kDatasetVersion);
  detail::put_u64(os, config_hash);
  detail::put_u64(os, samples.size());
  for (const auto& s : samples) {
    detail::put_tensor(os, s.wrench_f);
    detail::put_tensor(os, s.wrench_t);
    detail::put_tensor(os, s.label);
    detail::put_u32(os, static_cast<uint32_t>(s.primitive));
    uint64_t bits;
    std::memcpy(&bits, &s.payload, 8);
    detail::put_u64(os, bits);
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline std::vector<TrainingSample> load_dataset(const std::string& path,
                                                uint64_t* config_hash = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, detail::kDatasetMagic, 4) != 0)
    throw IoError("'" + path + "' is not a dataset file (bad magic)");
  const uint32_t version = detail::get_u32(is);
  if (version != detail::kDatasetVersion)
    throw IoError("dataset version mismatch: file has " + std::to_string(version) +
                  ", expected " + std::to_string(detail::kDatasetVersion));
  const uint64_t hash = detail::get_u64(is);
  if (config_hash) *config_hash = hash;
  const uint64_t n = detail::get_u64(is);
  std::vector<TrainingSample> out;
  out.reserve(n);
  for (uint64_t i = 0; i < n; ++i) {
    TrainingSample s;
    s.wrench_f = detail::get_tensor(is);
    s.wrench_t = detail::get_tensor(is);
    s.label = detail::get_tensor(is);
    s.primitive = static_cast<int32_t>(detail::get_u32(is));
    const uint64_t bits = detail::get_u64(is);
    std::memcpy(&s.payload, &bits, 8);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace comanip
