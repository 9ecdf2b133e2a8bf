#include "earthgan/grid.hpp"

#include <cmath>
#include <limits>

#include "earthgan/kernels.hpp"

namespace earthgan::grid {
namespace {

void require_rank4(const Tensor<float>& t, const char* what) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(what) + ": expected V x R x H x W, got " +
                     to_string(t.shape()));
  }
}

ShellGrid with_values(const ShellGrid& like, Tensor<float> values) {
  ShellGrid out;
  out.variables = like.variables;
  out.stats = like.stats;
  out.timestep = like.timestep;
  out.values = std::move(values);
  return out;
}

std::size_t wrap(long long i, std::size_t n) {
  const long long m = static_cast<long long>(n);
  long long r = i % m;
  if (r < 0) r += m;
  return static_cast<std::size_t>(r);
}

}  // namespace

std::vector<std::string> default_variables(std::size_t count) {
  static const char* names[] = {"temperature", "v_x", "v_y", "v_z"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(count == 4 ? names[i] : "var" + std::to_string(i));
  }
  return out;
}

void ShellGrid::validate() const {
  require_rank4(values, "shell grid");
  if (variables.size() != var_count()) {
    throw ValidationError("shell grid: " + std::to_string(variables.size()) +
                          " variable names for " + std::to_string(var_count()) +
                          " variables");
  }
  if (stats.size() != var_count()) {
    throw ValidationError("shell grid: " + std::to_string(stats.size()) +
                          " stats entries for " + std::to_string(var_count()) +
                          " variables");
  }
}

Stats observed_range(const Tensor<float>& values) {
  require_rank4(values, "observed_range");
  Stats stats(values.dim(0));
  const std::size_t n = values.size() / values.dim(0);
  for (std::size_t v = 0; v < values.dim(0); ++v) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      const float x = values[v * n + i];
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    stats[v] = {lo, hi};
  }
  return stats;
}

Stats merge_ranges(const Stats& a, const Stats& b) {
  if (a.size() != b.size()) {
    throw ValidationError("merge_ranges: variable counts differ");
  }
  Stats out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = {std::min(a[i].min, b[i].min), std::max(a[i].max, b[i].max)};
  }
  return out;
}

ShellGrid make_grid(Tensor<float> values, std::uint64_t timestep) {
  require_rank4(values, "make_grid");
  ShellGrid g;
  g.variables = default_variables(values.dim(0));
  g.stats = observed_range(values);
  g.timestep = timestep;
  g.values = std::move(values);
  return g;
}

ShellGrid rescale_latlon(const ShellGrid& grid, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw ValidationError("rescale_latlon: ratio must lie in (0, 1], got " +
                          std::to_string(ratio));
  }
  const auto lat = static_cast<std::size_t>(std::lround(ratio * double(grid.lat())));
  const auto lon = static_cast<std::size_t>(std::lround(ratio * double(grid.lon())));
  if (lat == 0 || lon == 0) {
    throw ValidationError("rescale_latlon: ratio " + std::to_string(ratio) +
                          " leaves a non-positive extent");
  }
  Tensor<float> v = kernels::resample_axis(grid.values, 2, lat, false);
  v = kernels::resample_axis(v, 3, lon, true);
  return with_values(grid, std::move(v));
}

ShellGrid normalize_with(const ShellGrid& grid, const Stats& stats) {
  grid.validate();
  if (stats.size() != grid.var_count()) {
    throw ValidationError("normalize: stats cover " + std::to_string(stats.size()) +
                          " variables, grid has " +
                          std::to_string(grid.var_count()));
  }
  ShellGrid out = grid;
  out.stats = stats;
  const std::size_t n = grid.values.size() / grid.var_count();
  for (std::size_t v = 0; v < grid.var_count(); ++v) {
    const VarRange r = stats[v];
    const double lo = r.min, span = double(r.max) - double(r.min);
    float* p = out.values.data() + v * n;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = r.degenerate() ? 0.5f : static_cast<float>((double(p[i]) - lo) / span);
    }
  }
  return out;
}

std::pair<ShellGrid, Stats> minmax_normalize(const ShellGrid& grid) {
  Stats stats = observed_range(grid.values);
  return {normalize_with(grid, stats), stats};
}

ShellGrid denormalize(const ShellGrid& grid, const Stats& stats) {
  grid.validate();
  if (stats.size() != grid.var_count()) {
    throw ValidationError("denormalize: stats/variable count mismatch");
  }
  ShellGrid out = grid;
  const std::size_t n = grid.values.size() / grid.var_count();
  for (std::size_t v = 0; v < grid.var_count(); ++v) {
    const VarRange r = stats[v];
    const double lo = r.min, span = double(r.max) - double(r.min);
    float* p = out.values.data() + v * n;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = r.degenerate() ? r.min : static_cast<float>(lo + double(p[i]) * span);
    }
  }
  out.stats = observed_range(out.values);
  return out;
}

template <typename T>
Tensor<T> mirror_pad_axis(const Tensor<T>& input, std::size_t axis,
                          std::size_t before, std::size_t after) {
  const Shape& s = input.shape();
  if (axis >= s.size()) throw ShapeError("mirror_pad: axis out of range");
  const std::size_t n = s[axis];
  if (before >= n || after >= n) {
    throw ValidationError("mirror_pad: pad (" + std::to_string(before) + ", " +
                          std::to_string(after) + ") must be smaller than extent " +
                          std::to_string(n));
  }
  if (before == 0 && after == 0) return input;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t m = n + before + after;
  Shape os = s;
  os[axis] = m;
  Tensor<T> out(os);
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = input.data() + o * n * inner;
    T* dst = out.data() + o * m * inner;
    for (std::size_t j = 0; j < m; ++j) {
      const long long i = static_cast<long long>(j) - static_cast<long long>(before);
      std::size_t from;
      if (i < 0) {
        from = static_cast<std::size_t>(-i);
      } else if (i >= static_cast<long long>(n)) {
        from = 2 * (n - 1) - static_cast<std::size_t>(i);
      } else {
        from = static_cast<std::size_t>(i);
      }
      std::copy(src + from * inner, src + (from + 1) * inner, dst + j * inner);
    }
  }
  return out;
}

ShellGrid mirror_pad(const ShellGrid& grid, const PadSpec& pad) {
  Tensor<float> v = mirror_pad_axis(grid.values, 2, pad.lat_before, pad.lat_after);
  v = mirror_pad_axis(v, 3, pad.lon_before, pad.lon_after);
  return with_values(grid, std::move(v));
}

ShellGrid block_downsample_latlon(const ShellGrid& grid, std::size_t factor) {
  if (factor == 0) throw ValidationError("block_downsample: factor must be >= 1");
  const std::size_t h = grid.lat(), w = grid.lon();
  if (h % factor || w % factor) {
    throw ValidationError("block_downsample: extents " + std::to_string(h) + "x" +
                          std::to_string(w) + " not divisible by " +
                          std::to_string(factor) + "; mirror-pad first");
  }
  const std::size_t oh = h / factor, ow = w / factor;
  Tensor<float> out({grid.var_count(), grid.radial(), oh, ow});
  const double inv = 1.0 / double(factor * factor);
  for (std::size_t v = 0; v < grid.var_count(); ++v)
    for (std::size_t r = 0; r < grid.radial(); ++r)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0;
          for (std::size_t a = 0; a < factor; ++a)
            for (std::size_t b = 0; b < factor; ++b)
              acc += grid.values.at(v, r, i * factor + a, j * factor + b);
          out.at(v, r, i, j) = static_cast<float>(acc * inv);
        }
  return with_values(grid, std::move(out));
}

std::vector<std::size_t> radial_indices(std::size_t radial_count, std::size_t n) {
  if (n < 2 || n > radial_count) {
    throw ValidationError("select_radial: need 2 <= n <= R, got n = " +
                          std::to_string(n) + ", R = " +
                          std::to_string(radial_count));
  }
  std::vector<std::size_t> idx(n);
  const double step = double(radial_count - 1) / double(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = static_cast<std::size_t>(std::lround(double(i) * step));
  }
  return idx;
}

ShellGrid select_radial(const ShellGrid& grid, std::size_t n) {
  const auto idx = radial_indices(grid.radial(), n);
  const std::size_t plane = grid.lat() * grid.lon();
  Tensor<float> out({grid.var_count(), n, grid.lat(), grid.lon()});
  for (std::size_t v = 0; v < grid.var_count(); ++v)
    for (std::size_t i = 0; i < n; ++i) {
      const float* src = &grid.values.at(v, idx[i], 0, 0);
      std::copy(src, src + plane, &out.at(v, i, 0, 0));
    }
  return with_values(grid, std::move(out));
}

ShellGrid center_radial(const ShellGrid& grid, std::size_t count) {
  if (count == 0 || count > grid.radial()) {
    throw ValidationError("center_radial: cannot take " + std::to_string(count) +
                          " of " + std::to_string(grid.radial()) + " layers");
  }
  const std::size_t start = (grid.radial() - count) / 2;
  return with_values(
      grid, kernels::crop(grid.values, {0, start, 0, 0},
                          {grid.var_count(), count, grid.lat(), grid.lon()}));
}

template <typename T>
Tensor<T> lon_window(const Tensor<T>& input, long long start, std::size_t count) {
  if (input.rank() != 4) throw ShapeError("lon_window: expected rank 4");
  const std::size_t w = input.dim(3);
  const std::size_t rows = input.size() / w;
  Shape os = input.shape();
  os[3] = count;
  Tensor<T> out(os);
  const std::size_t first = wrap(start, w);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = input.data() + r * w;
    T* dst = out.data() + r * count;
    for (std::size_t j = 0; j < count; ++j) dst[j] = src[(first + j) % w];
  }
  return out;
}

template <typename T>
Tensor<T> roll_lon(const Tensor<T>& input, long long k) {
  const std::size_t w = input.dim(3);
  return lon_window(input, -static_cast<long long>(wrap(k, w)), w);
}

ShellGrid rotate_lon(const ShellGrid& grid, long long k) {
  return with_values(grid, roll_lon(grid.values, k));
}

template Tensor<float> mirror_pad_axis(const Tensor<float>&, std::size_t,
                                       std::size_t, std::size_t);
template Tensor<double> mirror_pad_axis(const Tensor<double>&, std::size_t,
                                        std::size_t, std::size_t);
template Tensor<float> roll_lon(const Tensor<float>&, long long);
template Tensor<double> roll_lon(const Tensor<double>&, long long);
template Tensor<float> lon_window(const Tensor<float>&, long long, std::size_t);
template Tensor<double> lon_window(const Tensor<double>&, long long, std::size_t);

}  // namespace earthgan::grid
