#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "earthgan/checkpoint.hpp"
#include "earthgan/grid.hpp"
#include "earthgan/models.hpp"
#include "earthgan/pairs.hpp"

namespace earthgan::infer {

// Low-res window starts [0, stride, 2 stride, ...]. The stride must divide the
// column count so the wedges tile the circle exactly.
std::vector<long long> plan_wedges(std::size_t lr_lon_cols, std::size_t stride_lr);

// zero | seed:N | avg:N. Averaging uses seeds base .. base + n - 1.
struct NoiseMode {
  enum class Kind { kZero, kSeeded, kAveraged };
  Kind kind = Kind::kZero;
  std::uint64_t seed = 0;
  std::size_t count = 1;

  static NoiseMode zero() { return {}; }
  static NoiseMode seeded(std::uint64_t s) { return {Kind::kSeeded, s, 1}; }
  static NoiseMode averaged(std::size_t n, std::uint64_t base = 0) {
    return {Kind::kAveraged, base, n};
  }
  std::vector<std::uint64_t> seeds() const;
  std::string str() const;
  static NoiseMode parse(const std::string& text);  // ValidationError on junk
};

struct Wedge {
  Tensor<float> data;  // V x m_r x (H + 2 hr_lat_pad) x width
  long long lon_start_lr = 0;
  long long hr_lon_start = 0;  // wrapped
  std::size_t hr_lat_pad = 0;
  std::size_t hr_radial_start = 0;
  std::uint64_t timestep = 0;
};

// A trained generator plus what is needed to rebuild the pair geometry.
struct Model {
  model::GeneratorConfig config;
  model::ParamStore<float> params;
  grid::Stats stats;
  grid::PrepareParams prepare;
  Shape hr_shape;
  std::string fingerprint;
  std::uint64_t step = 0;
};

// Reads a model checkpoint. The layout comes from the checkpoint itself, or
// from `manifest` when given (required for checkpoints not written by a
// training run).
Model load_model(const std::filesystem::path& checkpoint,
                 const std::optional<std::filesystem::path>& manifest = std::nullopt);

grid::PairGeometry model_geometry(const Model& m, const Shape& lr_shape);

// Conditioning window at lon_start (circular) through the generator.
// averaged(n) is the voxelwise mean of n seeded passes; seeds are summed in
// sorted order so the result does not depend on their order.
Wedge generate_wedge(const model::ParamStore<float>& params,
                     const model::GeneratorConfig& cfg, const grid::ShellGrid& lr_globe,
                     const grid::PairGeometry& geometry, long long lon_start,
                     const NoiseMode& noise, const grid::Stats& expected_stats);
Wedge generate_wedge(const Model& m, const grid::ShellGrid& lr_globe, long long lon_start,
                     const NoiseMode& noise);

// One wedge per start, computed on up to `workers` threads.
std::vector<Wedge> generate_wedges(const Model& m, const grid::ShellGrid& lr_globe,
                                   const std::vector<long long>& starts,
                                   const NoiseMode& noise, std::size_t workers = 1);

// The ground-truth window a wedge at lon_start would reproduce.
Wedge truth_wedge(const grid::ShellGrid& hr, const grid::PairGeometry& geometry,
                  long long lon_start);

// feather: linear ramps across each overlap; average: weight 1 everywhere;
// hard: each column from exactly one wedge (centred crops, no blending).
enum class Blend { kFeather, kAverage, kHard };
Blend parse_blend(const std::string& text);
std::string blend_name(Blend b);

// Wedge footprints on a circle of `circle` high-res columns.
struct Layout {
  std::vector<long long> starts;  // hr start column per wedge
  std::size_t width = 0;
  std::size_t circle = 0;
};
Layout layout_of(const std::vector<Wedge>& wedges, std::size_t circle);

// Per-wedge column weights (width entries each), before normalisation.
std::vector<std::vector<double>> blend_weights(const Layout& layout, Blend blend);
// Number of wedges covering each of the `circle` columns.
std::vector<std::size_t> column_multiplicity(const Layout& layout);
// Columns c where a wedge's contribution begins or ends between c - 1 and c.
std::vector<std::size_t> seam_columns(const Layout& layout, Blend blend);

// Weighted accumulation of wedges into a full shell, padding rows removed.
// Blend weights vary only along longitude, so the weight map is stored per
// column.
class ShellAssembly {
 public:
  ShellAssembly(std::size_t vars, std::size_t radial, std::size_t lat, std::size_t circle);
  void add(const Wedge& wedge, const std::vector<double>& column_weights);
  const std::vector<double>& weights() const { return weight_; }
  // Divides by the accumulated weight. Throws ValidationError naming the
  // uncovered columns if any column has zero weight.
  Tensor<float> finalize() const;

 private:
  Shape shape_;
  Tensor<double> accum_;
  std::vector<double> weight_;
};

grid::ShellGrid stitch(const std::vector<Wedge>& wedges, std::size_t circle, Blend blend,
                       const grid::Stats& stats,
                       const std::vector<std::string>& variables = {});

struct SeamReport {
  std::vector<std::size_t> boundaries;
  double boundary_mean = 0;  // mean |x[c] - x[c-1]| over boundary columns
  double interior_mean = 0;  // same over every other adjacent column pair
  double ratio = 0;          // boundary / interior; 0 when both vanish
  std::string json() const;
};
// Differences wrap around the circle (column 0 against the last column).
SeamReport seam_metric(const Tensor<float>& shell, const std::vector<std::size_t>& boundaries);

// Plan and provenance as a JSON document, written next to exports.
std::string plan_json(const Layout& layout, Blend blend, const std::vector<Wedge>& wedges);

// lat x lon plane of one variable and radial layer.
Tensor<float> shell_slice(const grid::ShellGrid& shell, std::size_t var, std::size_t radial);

void export_shell(const grid::ShellGrid& shell, const std::filesystem::path& path);

struct SliceFiles {
  std::filesystem::path raw, image, sidecar;
};
// Writes <prefix>.f32 (raw little-endian lat x lon), <prefix>.pgm (8-bit
// greyscale with [lo, hi] mapped to [0, 255]) and <prefix>.json recording the
// mapping and the variable's normalisation range.
SliceFiles export_slice(const grid::ShellGrid& shell, std::size_t var, std::size_t radial,
                        const std::filesystem::path& prefix, float lo = 0.0f, float hi = 1.0f);

}  // namespace earthgan::infer
