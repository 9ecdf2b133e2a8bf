#pragma once

#include <cstdint>

#include "earthgan/grid.hpp"

namespace earthgan::grid {

// Generator footprint law: every spatial axis maps n -> 8n - 42. The 21-voxel
// margin is the crop that centres the target inside the upsampled input.
inline constexpr std::size_t kUpsample = 8;
inline constexpr std::size_t kMargin = 21;
inline constexpr std::size_t kMinInputExtent = 7;

inline std::size_t output_extent(std::size_t n) { return kUpsample * n - 2 * kMargin; }

// Parameters of the preparation pipeline and of the pair windows cut from
// its outputs. Defaults reproduce the 180x360 -> 108x216 -> 14x27 chain with
// (4, 30, 20, 10) inputs.
struct PrepareParams {
  double scale_ratio = 0.6;
  std::size_t downsample = 8;
  std::size_t lat_pad = 2;        // mirror rows per side before downsampling
  std::size_t radial_lr = 30;     // equally spaced layers kept at low res
  std::size_t input_lat_pad = 3;  // mirror rows per side on the low-res input
  std::size_t window_lon = 10;    // low-res columns per input window

  friend bool operator==(const PrepareParams&, const PrepareParams&) = default;
};

// Where a pair's input and target windows sit, derived from the prepared
// high-res (V x R x H x W) and low-res grid shapes.
struct PairGeometry {
  Shape input;   // V x n_r x n_lat x n_lon
  Shape target;  // V x m_r x m_lat x m_lon
  std::size_t lr_lat_pad = 0;
  std::size_t hr_lat_pad = 0;
  std::size_t hr_radial_start = 0;
  std::size_t hr_lat = 0, hr_lon = 0;  // unpadded high-res extents
  std::size_t lr_lon = 0;

  // High-res column of the target's first column for a given input start.
  long long hr_lon_start(long long lon_start) const;
};

PairGeometry pair_geometry(const Shape& hr_shape, const Shape& lr_shape,
                           const PrepareParams& params);

struct TrainingPair {
  Tensor<float> input;
  Tensor<float> target;
  std::uint64_t timestep = 0;
  long long lon_start = 0;     // low-res column, wrapped to [0, W_lr)
  long long hr_lon_start = 0;  // wrapped to [0, W_hr)
  std::size_t hr_lat_pad = 0;
  std::size_t hr_radial_start = 0;
};

// Conditioning window: low-res grid mirror-padded in latitude, `window_lon`
// columns from lon_start (circular).
Tensor<float> extract_input_window(const ShellGrid& lr, long long lon_start,
                                   const PairGeometry& geometry);
// Ground-truth window aligned with the generator output for that input.
Tensor<float> extract_target_window(const ShellGrid& hr, long long lon_start,
                                    const PairGeometry& geometry);

// Rejects grids whose timestep or normalisation stats disagree.
TrainingPair extract_pair(const ShellGrid& hr, const ShellGrid& lr,
                          long long lon_start, const PairGeometry& geometry);

}  // namespace earthgan::grid
