#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "earthgan/params.hpp"

namespace earthgan::model {

// Conditional generator: four stages at scales 1, 2, 4, 8 with
// 1, 2, 2, 1 valid 3^3 convolutions and a trilinear x2 upsample before each
// stage after the first. A 1^3 projection to out_channels at every stage feeds
// a running skip output that is upsampled, centre-cropped and summed.
struct GeneratorConfig {
  std::size_t in_channels = 4;
  std::size_t out_channels = 4;
  std::vector<std::size_t> channels{128, 64, 32, 16};
  std::size_t channel_cap = 128;
  std::size_t kernel = 3;
  bool noise = true;
  double slope = 0.2;

  // Channel width per stage after applying the cap.
  std::size_t width(std::size_t stage) const;
  void validate() const;
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

// Wasserstein critic over candidate + condition channels: blocks of
// {3^3 valid conv, leaky relu, 2x mean pool}, then a global channel mean and
// an affine head to one unbounded score.
struct CriticConfig {
  std::size_t in_channels = 8;
  std::vector<std::size_t> channels{32, 64, 128};
  std::size_t channel_cap = 128;
  double slope = 0.2;

  std::size_t width(std::size_t block) const;
  void validate() const;
  friend bool operator==(const CriticConfig&, const CriticConfig&) = default;
};

// Spatial extents after the generator, n -> 8n - 42 per axis. Throws if any
// extent is below the minimum of 7.
Shape generator_output_shape(const GeneratorConfig& cfg, const Shape& input_shape);
// Throws ShapeError if the critic cannot reduce `footprint` to >= 1 voxel.
void check_critic_footprint(const CriticConfig& cfg, const Shape& footprint);

// Noise injection mode for one forward pass.
struct NoiseSpec {
  bool enabled = false;
  std::uint64_t seed = 0;
  static NoiseSpec zero() { return {}; }
  static NoiseSpec seeded(std::uint64_t s) { return {true, s}; }
};

// Parameters live under "gen/" and "critic/" respectively. Kernels are
// Gaussian with std 1/sqrt(fan_in); biases, noise scales and the critic head
// bias start at zero.
template <typename T>
ParamStore<T> build_generator(const GeneratorConfig& cfg, std::uint64_t seed);
template <typename T>
ParamStore<T> build_critic(const CriticConfig& cfg, std::uint64_t seed);

template <typename T>
ad::Var<T> generator_forward(const ParamStore<T>& params, const GeneratorConfig& cfg,
                             const ad::Var<T>& input, const NoiseSpec& noise);

// Graph-free inference.
template <typename T>
Tensor<T> generate(const ParamStore<T>& params, const GeneratorConfig& cfg,
                   const Tensor<T>& input, const NoiseSpec& noise);

// Trilinear x8 then a 21-voxel centre crop: the conditioning input resampled
// onto the generator's output footprint.
template <typename T>
Tensor<T> upsample_condition(const Tensor<T>& input);

template <typename T>
ad::Var<T> critic_forward(const ParamStore<T>& params, const CriticConfig& cfg,
                          const ad::Var<T>& candidate, const ad::Var<T>& condition);

// Stable hash of the architecture, stored in checkpoints.
std::string fingerprint(const GeneratorConfig& gen, const std::optional<CriticConfig>& critic);
std::string config_json(const GeneratorConfig& cfg);
std::string config_json(const CriticConfig& cfg);
GeneratorConfig generator_config_from_json(const std::string& text);
CriticConfig critic_config_from_json(const std::string& text);

}  // namespace earthgan::model
