#pragma once

#include <cstdint>

#include "earthgan/grid.hpp"

namespace earthgan::grid {

struct SynthDims {
  std::size_t vars = 4, radial = 57, lat = 22, lon = 64;
};

// Deterministic synthetic mantle-like shell. Variable 0 is temperature: a
// linear radial profile (hot at the core) plus Gaussian plumes rising from
// the core. The remaining variables are derivatives of a smooth potential
// (plumes plus a few large-scale modes) along longitude, latitude and radius,
// cycling if vars > 4. `timestep` drifts the plumes in longitude so one seed
// yields a coherent time series.
ShellGrid synth_shell(std::uint64_t seed, const SynthDims& dims,
                      std::size_t plume_count, std::uint64_t timestep = 0);

}  // namespace earthgan::grid
