#include "crossgram/cgwt.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "crossgram/errors.hpp"

namespace crossgram::cgwt {

namespace {

constexpr unsigned char kMagic[4] = {0x43, 0x47, 0x57, 0x54}; // "CGWT"

static_assert(std::endian::native == std::endian::little,
              "CGWT I/O assumes a little-endian host");

void readExact(std::ifstream& in, void* dst, size_t n, const std::string& what,
               const std::string& path) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw IoError("CGWT: truncated file while reading " + what + " in " + path);
}

template <typename T>
T readScalar(std::ifstream& in, const std::string& what,
             const std::string& path) {
  T v{};
  readExact(in, &v, sizeof(T), what, path);
  return v;
}

template <typename T>
void writeScalar(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

} // namespace

std::vector<NamedTensor> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("CGWT: cannot open " + path);

  unsigned char magic[4];
  readExact(in, magic, 4, "magic", path);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("CGWT: bad magic in " + path);

  const auto version = readScalar<uint16_t>(in, "version", path);
  if (version != kVersion)
    throw IoError("CGWT: unsupported version " + std::to_string(version) +
                  " in " + path);

  const auto count = readScalar<uint32_t>(in, "tensor count", path);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (uint32_t t = 0; t < count; ++t) {
    NamedTensor nt;
    const auto nameLen = readScalar<uint16_t>(in, "name length", path);
    nt.name.resize(nameLen);
    readExact(in, nt.name.data(), nameLen, "tensor name", path);
    const auto ndim = readScalar<uint8_t>(in, "ndim of " + nt.name, path);
    nt.dims.resize(ndim);
    readExact(in, nt.dims.data(), sizeof(uint32_t) * ndim,
              "dims of " + nt.name, path);
    nt.data.resize(nt.elementCount());
    readExact(in, nt.data.data(), sizeof(float) * nt.data.size(),
              "data of " + nt.name, path);
    tensors.push_back(std::move(nt));
  }
  return tensors;
}

void write_file(const std::string& path,
                const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("CGWT: cannot open " + path + " for writing");

  out.write(reinterpret_cast<const char*>(kMagic), 4);
  writeScalar<uint16_t>(out, kVersion);
  writeScalar<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    writeScalar<uint16_t>(out, static_cast<uint16_t>(nt.name.size()));
    out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    writeScalar<uint8_t>(out, static_cast<uint8_t>(nt.dims.size()));
    out.write(reinterpret_cast<const char*>(nt.dims.data()),
              static_cast<std::streamsize>(sizeof(uint32_t) * nt.dims.size()));
    if (nt.data.size() != nt.elementCount())
      throw IoError("CGWT: tensor " + nt.name + " data length " +
                    std::to_string(nt.data.size()) +
                    " does not match its dims");
    out.write(reinterpret_cast<const char*>(nt.data.data()),
              static_cast<std::streamsize>(sizeof(float) * nt.data.size()));
  }
  if (!out)
    throw IoError("CGWT: write failed for " + path);
}

} // namespace crossgram::cgwt
