#include "earthgan/volume_io.hpp"

#include <fstream>

#include "earthgan/binary.hpp"

namespace earthgan::grid {
namespace {

constexpr char kMagic[4] = {'E', 'G', 'V', '1'};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) {
    throw ValidationError(std::string("volume ") + what + " exceeds 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

VolumeHeader read_header(binary::Reader& in) {
  if (in.text(4) != std::string_view(kMagic, 4)) {
    throw FormatError(in.context() + ": not an EGV1 volume (bad magic)");
  }
  VolumeHeader h;
  h.version = in.u32();
  if (h.version != kVolumeVersion) {
    throw FormatError(in.context() + ": unsupported EGV1 version " +
                      std::to_string(h.version));
  }
  h.vars = in.u32();
  h.radial = in.u32();
  h.lat = in.u32();
  h.lon = in.u32();
  h.timestep = in.u64();
  if (!h.vars || !h.radial || !h.lat || !h.lon) {
    throw FormatError(in.context() + ": zero extent in header " +
                      to_string(h.shape()));
  }
  if (h.vars > 4096) {
    throw FormatError(in.context() + ": implausible variable count " +
                      std::to_string(h.vars));
  }
  h.stats.resize(h.vars);
  for (auto& r : h.stats) {
    r.min = in.f32();
    r.max = in.f32();
  }
  for (std::uint32_t v = 0; v < h.vars; ++v) {
    h.variables.push_back(in.padded(kVariableNameBytes));
  }
  return h;
}

}  // namespace

std::size_t VolumeHeader::header_bytes() const {
  return 4 + 5 * 4 + 8 + std::size_t(vars) * (8 + kVariableNameBytes);
}

std::vector<std::uint8_t> encode_volume(const ShellGrid& grid) {
  grid.validate();
  binary::Writer out;
  out.bytes(kMagic, 4);
  out.u32(kVolumeVersion);
  out.u32(checked_u32(grid.var_count(), "variable count"));
  out.u32(checked_u32(grid.radial(), "radial extent"));
  out.u32(checked_u32(grid.lat(), "latitude extent"));
  out.u32(checked_u32(grid.lon(), "longitude extent"));
  out.u64(grid.timestep);
  for (const auto& r : grid.stats) {
    out.f32(r.min);
    out.f32(r.max);
  }
  for (const auto& name : grid.variables) out.padded(name, kVariableNameBytes);
  out.f32s(grid.values.values());
  return std::move(out.buffer());
}

VolumeHeader decode_volume_header(std::span<const std::uint8_t> bytes) {
  binary::Reader in(bytes, "EGV1");
  return read_header(in);
}

ShellGrid decode_volume(std::span<const std::uint8_t> bytes) {
  binary::Reader in(bytes, "EGV1");
  VolumeHeader h = read_header(in);
  const std::size_t count = numel(h.shape());
  const std::size_t want = count * sizeof(float);
  if (in.remaining() != want) {
    throw TruncatedError("EGV1: header declares " + to_string(h.shape()) + " (" +
                         std::to_string(want) + " payload bytes) but " +
                         std::to_string(in.remaining()) + " bytes follow");
  }
  ShellGrid g;
  g.values = Tensor<float>(h.shape());
  in.f32s(g.values.values());
  g.variables = std::move(h.variables);
  g.stats = std::move(h.stats);
  g.timestep = h.timestep;
  return g;
}

void save_volume(const ShellGrid& grid, const std::filesystem::path& path) {
  binary::write_file(path, encode_volume(grid));
}

ShellGrid load_volume(const std::filesystem::path& path) {
  const auto bytes = binary::read_file(path);
  try {
    return decode_volume(bytes);
  } catch (const TruncatedError& e) {
    throw TruncatedError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

VolumeHeader read_volume_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  // Fixed part first, then the per-variable tail once V is known.
  std::vector<std::uint8_t> head(4 + 5 * 4 + 8);
  in.read(reinterpret_cast<char*>(head.data()), std::streamsize(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  if (head.size() >= 12) {
    const std::uint32_t vars = head[8] | head[9] << 8 | head[10] << 16 |
                               std::uint32_t(head[11]) << 24;
    if (vars <= 4096) {
      std::vector<std::uint8_t> tail(std::size_t(vars) * (8 + kVariableNameBytes));
      in.read(reinterpret_cast<char*>(tail.data()), std::streamsize(tail.size()));
      tail.resize(static_cast<std::size_t>(in.gcount()));
      head.insert(head.end(), tail.begin(), tail.end());
    }
  }
  try {
    return decode_volume_header(head);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace earthgan::grid
