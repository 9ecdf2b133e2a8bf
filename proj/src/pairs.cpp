#include "earthgan/pairs.hpp"

namespace earthgan::grid {
namespace {

long long wrap(long long i, std::size_t n) {
  const long long m = static_cast<long long>(n);
  return ((i % m) + m) % m;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError("pair geometry: " + msg);
}

}  // namespace

long long PairGeometry::hr_lon_start(long long lon_start) const {
  return wrap(static_cast<long long>(kUpsample) * lon_start +
                  static_cast<long long>(kMargin),
              hr_lon);
}

PairGeometry pair_geometry(const Shape& hr, const Shape& lr,
                           const PrepareParams& p) {
  require(hr.size() == 4 && lr.size() == 4, "grids must be rank 4");
  require(hr[0] == lr[0], "variable counts differ");
  require(p.downsample == kUpsample,
          "downsample factor must be " + std::to_string(kUpsample) +
              " to match the generator, got " + std::to_string(p.downsample));
  require(hr[3] == kUpsample * lr[3],
          "high-res longitude " + std::to_string(hr[3]) + " is not " +
              std::to_string(kUpsample) + " x low-res " + std::to_string(lr[3]));
  require(hr[2] + 2 * p.lat_pad == kUpsample * lr[2],
          "padded high-res latitude " + std::to_string(hr[2] + 2 * p.lat_pad) +
              " is not " + std::to_string(kUpsample) + " x low-res " +
              std::to_string(lr[2]));

  PairGeometry g;
  g.lr_lat_pad = p.input_lat_pad;
  g.hr_lat = hr[2];
  g.hr_lon = hr[3];
  g.lr_lon = lr[3];
  const std::size_t n_r = lr[1];
  const std::size_t n_lat = lr[2] + 2 * p.input_lat_pad;
  const std::size_t n_lon = p.window_lon;
  for (std::size_t n : {n_r, n_lat, n_lon}) {
    require(n >= kMinInputExtent, "input extent " + std::to_string(n) +
                                      " below the minimum " +
                                      std::to_string(kMinInputExtent));
  }
  require(p.input_lat_pad < lr[2], "input latitude pad must be < low-res rows");
  require(n_lon <= lr[3], "input window wider than the low-res globe");

  const long long hr_pad = static_cast<long long>(p.lat_pad) +
                           static_cast<long long>(kUpsample * p.input_lat_pad) -
                           static_cast<long long>(kMargin);
  require(hr_pad >= 0 && hr_pad < static_cast<long long>(hr[2]),
          "target latitude pad " + std::to_string(hr_pad) + " out of range");
  g.hr_lat_pad = static_cast<std::size_t>(hr_pad);

  g.input = {lr[0], n_r, n_lat, n_lon};
  g.target = {lr[0], output_extent(n_r), output_extent(n_lat), output_extent(n_lon)};
  require(g.target[1] <= hr[1], "target needs " + std::to_string(g.target[1]) +
                                    " radial layers, high-res grid has " +
                                    std::to_string(hr[1]));
  require(g.target[3] <= hr[3], "target wider than the high-res globe");
  g.hr_radial_start = (hr[1] - g.target[1]) / 2;
  return g;
}

Tensor<float> extract_input_window(const ShellGrid& lr, long long lon_start,
                                   const PairGeometry& g) {
  if (lr.values.shape() != Shape{g.input[0], g.input[1], lr.lat(), g.lr_lon} ||
      lr.lat() + 2 * g.lr_lat_pad != g.input[2]) {
    throw ShapeError("extract_input_window: low-res grid " +
                     to_string(lr.values.shape()) + " does not fit input " +
                     to_string(g.input));
  }
  auto padded = mirror_pad_axis(lr.values, 2, g.lr_lat_pad, g.lr_lat_pad);
  return lon_window(padded, lon_start, g.input[3]);
}

Tensor<float> extract_target_window(const ShellGrid& hr, long long lon_start,
                                    const PairGeometry& g) {
  if (hr.var_count() != g.target[0] || hr.lat() != g.hr_lat ||
      hr.lon() != g.hr_lon || hr.radial() < g.target[1]) {
    throw ShapeError("extract_target_window: high-res grid " +
                     to_string(hr.values.shape()) + " does not fit target " +
                     to_string(g.target));
  }
  const ShellGrid core = center_radial(hr, g.target[1]);
  auto padded = mirror_pad_axis(core.values, 2, g.hr_lat_pad, g.hr_lat_pad);
  return lon_window(padded, g.hr_lon_start(lon_start), g.target[3]);
}

TrainingPair extract_pair(const ShellGrid& hr, const ShellGrid& lr,
                          long long lon_start, const PairGeometry& g) {
  if (hr.timestep != lr.timestep) {
    throw ValidationError("extract_pair: high-res timestep " +
                          std::to_string(hr.timestep) + " != low-res timestep " +
                          std::to_string(lr.timestep));
  }
  if (hr.stats != lr.stats) {
    throw ValidationError("extract_pair: grids carry different normalisation stats");
  }
  TrainingPair pair;
  pair.input = extract_input_window(lr, lon_start, g);
  pair.target = extract_target_window(hr, lon_start, g);
  pair.timestep = hr.timestep;
  pair.lon_start = wrap(lon_start, g.lr_lon);
  pair.hr_lon_start = g.hr_lon_start(lon_start);
  pair.hr_lat_pad = g.hr_lat_pad;
  pair.hr_radial_start = g.hr_radial_start;
  return pair;
}

}  // namespace earthgan::grid
