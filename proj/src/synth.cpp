#include "earthgan/synth.hpp"

#include <cmath>
#include <numbers>

#include "earthgan/rng.hpp"

namespace earthgan::grid {
namespace {

constexpr double kPi = std::numbers::pi;

struct Plume {
  double lat, lon, width, amplitude, drift, top;
};

struct Mode {
  double amplitude, lon_freq, lat_freq, radial_freq, phase;
};

double lat_of(std::size_t i, std::size_t h) {
  return kPi / 2 - (double(i) + 0.5) * kPi / double(h);
}

double lon_of(std::size_t j, std::size_t w) {
  return 2 * kPi * (double(j) + 0.5) / double(w);
}

double radius_of(std::size_t r, std::size_t n) {
  return n == 1 ? 0.0 : double(r) / double(n - 1);
}

// Great-circle angle between two (lat, lon) points.
double angle(double lat1, double lon1, double lat2, double lon2) {
  const double c = std::sin(lat1) * std::sin(lat2) +
                   std::cos(lat1) * std::cos(lat2) * std::cos(lon1 - lon2);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

// Central differences along one axis of an R x H x W field; circular in
// longitude, one-sided at the latitude and radial ends.
std::vector<double> derivative(const std::vector<double>& f, std::size_t R,
                               std::size_t H, std::size_t W, int axis) {
  std::vector<double> out(f.size());
  const std::size_t n[3] = {R, H, W};
  const std::size_t stride[3] = {H * W, W, 1};
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t idx[3] = {r, i, j};
        const std::size_t at = (r * H + i) * W + j;
        const std::size_t k = idx[axis], len = n[axis], s = stride[axis];
        double d = 0;
        if (len == 1) {
          d = 0;
        } else if (axis == 2) {
          const std::size_t lo = (k + len - 1) % len, hi = (k + 1) % len;
          d = (f[at - k * s + hi * s] - f[at - k * s + lo * s]) * 0.5 * double(len);
        } else if (k == 0) {
          d = (f[at + s] - f[at]) * double(len - 1);
        } else if (k == len - 1) {
          d = (f[at] - f[at - s]) * double(len - 1);
        } else {
          d = (f[at + s] - f[at - s]) * 0.5 * double(len - 1);
        }
        out[at] = d;
      }
  return out;
}

}  // namespace

ShellGrid synth_shell(std::uint64_t seed, const SynthDims& dims,
                      std::size_t plume_count, std::uint64_t timestep) {
  const std::size_t V = dims.vars, R = dims.radial, H = dims.lat, W = dims.lon;
  if (!V || !R || !H || !W) {
    throw ValidationError("synth_shell: dims must be positive");
  }
  CounterRng rng(seed, 0x5e17);
  std::vector<Plume> plumes(plume_count);
  for (auto& p : plumes) {
    p.lat = std::asin(2 * rng.uniform() - 1) * 0.9;
    p.lon = 2 * kPi * rng.uniform();
    p.width = 0.12 + 0.35 * rng.uniform();
    p.amplitude = 0.3 + 0.7 * rng.uniform();
    p.drift = 0.05 * (rng.uniform() - 0.5);
    p.top = 0.6 + 0.4 * rng.uniform();
  }
  std::vector<Mode> modes(4);
  for (auto& m : modes) {
    m.amplitude = 0.2 + 0.3 * rng.uniform();
    m.lon_freq = double(1 + rng.below(4));
    m.lat_freq = double(1 + rng.below(3));
    m.radial_freq = double(1 + rng.below(2));
    m.phase = 2 * kPi * rng.uniform();
  }

  const std::size_t plane = H * W;
  // Separable plume factors: angular footprint per (lat, lon), radial taper.
  std::vector<std::vector<double>> footprint(plume_count, std::vector<double>(plane));
  std::vector<std::vector<double>> taper(plume_count, std::vector<double>(R));
  for (std::size_t p = 0; p < plume_count; ++p) {
    const Plume& pl = plumes[p];
    const double lon0 = pl.lon + pl.drift * double(timestep);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const double a = angle(lat_of(i, H), lon_of(j, W), pl.lat, lon0);
        footprint[p][i * W + j] =
            pl.amplitude * std::exp(-a * a / (2 * pl.width * pl.width));
      }
    for (std::size_t r = 0; r < R; ++r) {
      const double rho = radius_of(r, R);
      taper[p][r] = 1.0 / (1.0 + std::exp((rho - pl.top) * 12.0));
    }
  }

  std::vector<double> temperature(R * plane), potential(R * plane);
  for (std::size_t r = 0; r < R; ++r) {
    const double rho = radius_of(r, R);
    for (std::size_t i = 0; i < H; ++i) {
      const double lat = lat_of(i, H);
      for (std::size_t j = 0; j < W; ++j) {
        const double lon = lon_of(j, W);
        double anomaly = 0;
        for (std::size_t p = 0; p < plume_count; ++p) {
          anomaly += footprint[p][i * W + j] * taper[p][r];
        }
        double large = 0;
        for (const auto& m : modes) {
          large += m.amplitude * std::cos(m.lon_freq * lon + m.phase) *
                   std::cos(m.lat_freq * lat) *
                   std::sin(kPi * m.radial_freq * (rho + 0.25));
        }
        const std::size_t at = (r * H + i) * W + j;
        temperature[at] = (1.0 - rho) + anomaly;
        potential[at] = anomaly + large;
      }
    }
  }

  std::vector<double> grads[3];
  if (V > 1) {
    for (int axis = 0; axis < 3; ++axis) {
      // Variable order: v_x along longitude, v_y latitude, v_z radius.
      grads[axis] = derivative(potential, R, H, W, 2 - axis);
    }
  }

  Tensor<float> values({V, R, H, W});
  const std::size_t n = R * plane;
  for (std::size_t v = 0; v < V; ++v) {
    const std::vector<double>& src = v == 0 ? temperature : grads[(v - 1) % 3];
    float* dst = values.data() + v * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(src[i]);
  }
  return make_grid(std::move(values), timestep);
}

}  // namespace earthgan::grid
