#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "earthgan/tensor.hpp"

namespace earthgan::grid {

// Per-variable affine normalisation: physical = min + normalised * (max - min).
// min == max marks a constant (degenerate) variable, normalised to 0.5.
struct VarRange {
  float min = 0.0f;
  float max = 1.0f;
  bool degenerate() const { return !(max > min); }
  friend bool operator==(const VarRange&, const VarRange&) = default;
};

using Stats = std::vector<VarRange>;

std::vector<std::string> default_variables(std::size_t count);

// Field on an equirectangular spherical-shell grid, laid out
// variable x radial x latitude x longitude. Radial index 0 is nearest the core;
// longitude is circular.
struct ShellGrid {
  std::vector<std::string> variables;
  Tensor<float> values;
  Stats stats;
  std::uint64_t timestep = 0;

  std::size_t var_count() const { return values.dim(0); }
  std::size_t radial() const { return values.dim(1); }
  std::size_t lat() const { return values.dim(2); }
  std::size_t lon() const { return values.dim(3); }

  // Throws ValidationError if names/stats disagree with the value tensor.
  void validate() const;
};

// Builds a grid with default variable names and stats covering the observed
// per-variable range.
ShellGrid make_grid(Tensor<float> values, std::uint64_t timestep = 0);

// Observed per-variable [min, max] of one grid.
Stats observed_range(const Tensor<float>& values);
// Union of per-variable ranges.
Stats merge_ranges(const Stats& a, const Stats& b);

// Bilinear lat/lon rescale to round(ratio * extent), clamped in latitude and
// circular in longitude. ratio must lie in (0, 1].
ShellGrid rescale_latlon(const ShellGrid& grid, double ratio);

// Maps every variable through `stats` into [0, 1].
ShellGrid normalize_with(const ShellGrid& grid, const Stats& stats);
// Normalises with the grid's own observed range.
std::pair<ShellGrid, Stats> minmax_normalize(const ShellGrid& grid);
ShellGrid denormalize(const ShellGrid& grid, const Stats& stats);

// Reflection that excludes the edge sample: padding [a, b, c, d] by 2 on the
// left yields [c, b, a, b, c, d]. Each pad must be smaller than the extent.
template <typename T>
Tensor<T> mirror_pad_axis(const Tensor<T>& input, std::size_t axis,
                          std::size_t before, std::size_t after);

struct PadSpec {
  std::size_t lat_before = 0, lat_after = 0, lon_before = 0, lon_after = 0;
};
ShellGrid mirror_pad(const ShellGrid& grid, const PadSpec& pad);

// Mean over factor x factor lat/lon blocks per radial layer. Extents must be
// divisible by the factor.
ShellGrid block_downsample_latlon(const ShellGrid& grid, std::size_t factor);

// round(linspace(0, R - 1, n)).
std::vector<std::size_t> radial_indices(std::size_t radial_count, std::size_t n);
ShellGrid select_radial(const ShellGrid& grid, std::size_t n);
// `count` consecutive layers centred in the stack (start = (R - count) / 2).
ShellGrid center_radial(const ShellGrid& grid, std::size_t count);

// Circular longitude shift: out[..., j] = in[..., (j - k) mod W].
template <typename T>
Tensor<T> roll_lon(const Tensor<T>& input, long long k);
ShellGrid rotate_lon(const ShellGrid& grid, long long k);

// `count` columns starting at `start`, wrapping around the circle.
template <typename T>
Tensor<T> lon_window(const Tensor<T>& input, long long start, std::size_t count);

}  // namespace earthgan::grid
