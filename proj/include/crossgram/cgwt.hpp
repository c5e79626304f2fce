#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace crossgram::cgwt {

// CGWT container: magic "CGWT", u16 LE version (= 1), u32 LE tensor count;
// per tensor a u16 LE name length, the UTF-8 name, u8 ndim, ndim u32 LE
// dims, then raw little-endian f32 data in row-major order.
struct NamedTensor {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> data;

  size_t elementCount() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

inline constexpr uint16_t kVersion = 1;

std::vector<NamedTensor> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<NamedTensor>& tensors);

} // namespace crossgram::cgwt
