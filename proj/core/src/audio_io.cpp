#include "prosdd/audio_io.hpp"

#include <cstdio>
#include <cstring>

#include "prosdd/common.hpp"

namespace prosdd {

// Host is assumed little-endian; static_assert guards the float layout.
static_assert(sizeof(float) == 4);

void write_f32(const std::filesystem::path& path, const std::vector<float>& samples) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw DataError("cannot open for write: " + path.string());
  const size_t n = std::fwrite(samples.data(), sizeof(float), samples.size(), f);
  std::fclose(f);
  if (n != samples.size()) throw DataError("short write: " + path.string());
}

std::vector<float> read_f32(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw DataError("cannot open audio file: " + path.string());
  std::fseek(f, 0, SEEK_END);
  const long bytes = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  if (bytes < 0 || bytes % 4 != 0) {
    std::fclose(f);
    throw DataError("corrupt audio file (size not a multiple of 4): " + path.string());
  }
  std::vector<float> samples(static_cast<size_t>(bytes) / 4);
  const size_t n = std::fread(samples.data(), sizeof(float), samples.size(), f);
  std::fclose(f);
  if (n != samples.size()) throw DataError("short read: " + path.string());
  return samples;
}

}  // namespace prosdd
