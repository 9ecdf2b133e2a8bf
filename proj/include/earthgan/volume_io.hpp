#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "earthgan/grid.hpp"

namespace earthgan::grid {

inline constexpr std::uint32_t kVolumeVersion = 1;
inline constexpr std::size_t kVariableNameBytes = 32;

// Everything in an EGV1 file except the values.
struct VolumeHeader {
  std::uint32_t version = kVolumeVersion;
  std::uint32_t vars = 0, radial = 0, lat = 0, lon = 0;
  std::uint64_t timestep = 0;
  Stats stats;
  std::vector<std::string> variables;

  Shape shape() const { return {vars, radial, lat, lon}; }
  std::size_t header_bytes() const;
};

std::vector<std::uint8_t> encode_volume(const ShellGrid& grid);
// Bad magic or version -> FormatError; short or overlong payload ->
// TruncatedError; names/stats that contradict the dims -> FormatError.
ShellGrid decode_volume(std::span<const std::uint8_t> bytes);
VolumeHeader decode_volume_header(std::span<const std::uint8_t> bytes);

void save_volume(const ShellGrid& grid, const std::filesystem::path& path);
ShellGrid load_volume(const std::filesystem::path& path);
VolumeHeader read_volume_header(const std::filesystem::path& path);

}  // namespace earthgan::grid
