#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "exin/tensor.hpp"

namespace exin {

// Checkpoint container. On-disk layout (all integers little-endian):
//   magic "EYXI" | format version u32 | config text length u64 | config text |
//   record count u64 | records... | crc32 u32
// One record: name length u32 | name bytes | rank u32 | dims u64 each |
// payload doubles (IEEE-754 bit pattern, little-endian). The trailing CRC32
// (polynomial 0xEDB88320, standard reflected form) covers every byte of the
// records region (from the first record byte up to the CRC itself).
struct CheckpointRecord {
  std::string name;
  Shape dims;
  std::vector<double> data;
};

struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  std::string config_text;
  std::vector<CheckpointRecord> records;

  void add(const std::string& name, const Shape& dims, const double* values, int64_t n);
  const CheckpointRecord* find(const std::string& name) const;

  void save(const std::string& path) const;    // IoError on any write failure
  static Checkpoint load(const std::string& path);  // IoError on corruption
};

uint32_t crc32_bytes(const uint8_t* data, size_t n, uint32_t seed = 0);

}  // namespace exin
