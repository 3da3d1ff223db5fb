#pragma once

#include <filesystem>
#include <vector>

namespace prosdd {

// Raw headerless IEEE-754 binary32 little-endian mono audio.
void write_f32(const std::filesystem::path& path, const std::vector<float>& samples);
std::vector<float> read_f32(const std::filesystem::path& path);

}  // namespace prosdd
