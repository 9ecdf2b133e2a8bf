#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "earthgan/grid.hpp"
#include "earthgan/pairs.hpp"

namespace earthgan::grid {

struct VolumeEntry {
  std::string path;
  std::uint64_t timestep = 0;
};

struct PreparedEntry {
  std::uint64_t timestep = 0;
  std::string hr;
  std::string lr;
};

// JSON document listing raw volumes, preparation parameters, shared
// normalisation stats and the prepared high/low-res volumes. Relative paths
// resolve against the manifest's directory.
struct Manifest {
  std::filesystem::path dir;
  std::vector<std::string> variables;
  std::vector<VolumeEntry> volumes;
  PrepareParams prepare;
  std::optional<Stats> stats;
  std::vector<PreparedEntry> prepared;

  std::filesystem::path resolve(const std::string& p) const;
};

Manifest parse_manifest(const std::string& text, const std::filesystem::path& dir);
std::string dump_manifest(const Manifest& m);
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

// Checks that every referenced file exists and that prepared volumes agree
// with each other, with the stats and with the pair geometry.
void validate_manifest(const Manifest& m);

// Stable identifier of a stats table, stored in checkpoints so a model is
// never paired with data normalised differently.
std::string stats_reference(const Stats& stats);

std::string prepare_params_json(const PrepareParams& params);
PrepareParams prepare_params_from_json(const std::string& text);

// Rescale then normalise with the shared stats.
ShellGrid prepare_high_res(const ShellGrid& raw, const Stats& stats,
                           const PrepareParams& params);
// Latitude mirror pad, block downsample, radial selection.
ShellGrid prepare_low_res(const ShellGrid& high_res, const PrepareParams& params);

// Two passes over the raw volumes: stats over all rescaled grids, then write
// normalised high-res and low-res volumes into out_dir alongside an updated
// manifest.json. Returns the updated manifest.
Manifest prepare_dataset(const Manifest& raw, const std::filesystem::path& out_dir);

struct PreparedSample {
  ShellGrid hr;
  ShellGrid lr;
};

PreparedSample load_prepared(const Manifest& m, std::size_t index);
// Index of the prepared entry for a timestep, or nullopt.
std::optional<std::size_t> find_timestep(const Manifest& m, std::uint64_t timestep);
PairGeometry manifest_geometry(const Manifest& m);

}  // namespace earthgan::grid
