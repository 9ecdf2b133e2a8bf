#include "earthgan/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "earthgan/binary.hpp"
#include "earthgan/dataset.hpp"
#include "earthgan/training.hpp"
#include "earthgan/volume_io.hpp"
#include "json.hpp"

namespace earthgan::infer {
namespace fs = std::filesystem;
using nlohmann::json;
using binary::write_file;
using binary::Writer;

namespace {

std::size_t wrap(long long i, std::size_t n) {
  const long long m = static_cast<long long>(n);
  long long r = i % m;
  if (r < 0) r += m;
  return static_cast<std::size_t>(r);
}

// Sorted wedge order plus circular distances to the neighbours.
struct Neighbours {
  std::size_t left_overlap = 0, right_overlap = 0;
  std::size_t to_next = 0;  // columns from this start to the next start
  std::size_t next = 0;     // index of the following wedge
};

std::vector<Neighbours> neighbours(const Layout& l) {
  const std::size_t n = l.starts.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return l.starts[a] < l.starts[b]; });
  std::vector<std::size_t> gap(n);  // gap[i]: columns from wedge i to its successor
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k], next = order[(k + 1) % n];
    std::size_t d = wrap(l.starts[next] - l.starts[i], l.circle);
    if (d == 0) d = l.circle;
    gap[i] = d;
  }
  std::vector<Neighbours> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k], prev = order[(k + n - 1) % n];
    out[i].to_next = gap[i];
    out[i].next = order[(k + 1) % n];
    out[i].right_overlap = l.width > gap[i] ? l.width - gap[i] : 0;
    out[i].left_overlap = l.width > gap[prev] ? l.width - gap[prev] : 0;
  }
  return out;
}

std::string column_ranges(const std::vector<std::size_t>& cols) {
  std::ostringstream os;
  for (std::size_t i = 0; i < cols.size();) {
    std::size_t j = i;
    while (j + 1 < cols.size() && cols[j + 1] == cols[j] + 1) ++j;
    if (i) os << ", ";
    os << cols[i];
    if (j > i) os << '-' << cols[j];
    i = j + 1;
  }
  return os.str();
}

}  // namespace

std::vector<long long> plan_wedges(std::size_t lr_lon_cols, std::size_t stride_lr) {
  if (stride_lr == 0 || lr_lon_cols == 0 || lr_lon_cols % stride_lr != 0) {
    throw ValidationError("plan_wedges: stride " + std::to_string(stride_lr) +
                          " does not divide " + std::to_string(lr_lon_cols) +
                          " low-res columns");
  }
  std::vector<long long> starts;
  for (std::size_t s = 0; s < lr_lon_cols; s += stride_lr) starts.push_back(static_cast<long long>(s));
  return starts;
}

std::vector<std::uint64_t> NoiseMode::seeds() const {
  switch (kind) {
    case Kind::kZero:
      return {};
    case Kind::kSeeded:
      return {seed};
    case Kind::kAveraged: {
      std::vector<std::uint64_t> s(count);
      std::iota(s.begin(), s.end(), seed);
      return s;
    }
  }
  return {};
}

std::string NoiseMode::str() const {
  switch (kind) {
    case Kind::kZero:
      return "zero";
    case Kind::kSeeded:
      return "seed:" + std::to_string(seed);
    case Kind::kAveraged:
      return "avg:" + std::to_string(count) + (seed ? "@" + std::to_string(seed) : "");
  }
  return "zero";
}

NoiseMode NoiseMode::parse(const std::string& text) {
  auto number = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ValidationError("noise mode '" + text + "': expected zero, seed:N or avg:N");
    }
    return std::stoull(s);
  };
  if (text == "zero") return zero();
  if (text.rfind("seed:", 0) == 0) return seeded(number(text.substr(5)));
  if (text.rfind("avg:", 0) == 0) {
    // avg:N or avg:N@BASE
    const std::string rest = text.substr(4);
    const auto at = rest.find('@');
    const std::uint64_t n = number(rest.substr(0, at));
    if (n == 0) throw ValidationError("noise mode '" + text + "': average of zero samples");
    return averaged(n, at == std::string::npos ? 0 : number(rest.substr(at + 1)));
  }
  throw ValidationError("noise mode '" + text + "': expected zero, seed:N or avg:N");
}

Model load_model(const fs::path& checkpoint, const std::optional<fs::path>& manifest) {
  const model::Checkpoint ckpt = model::load_checkpoint(checkpoint);
  if (ckpt.kind != "model") {
    throw ValidationError(checkpoint.string() + ": not a model checkpoint");
  }
  if (!ckpt.stats) {
    throw ValidationError(checkpoint.string() + ": checkpoint carries no normalisation stats");
  }
  Model m;
  m.config = ckpt.generator;
  m.stats = *ckpt.stats;
  m.fingerprint = ckpt.fingerprint();
  m.step = ckpt.step;
  if (manifest) {
    const grid::Manifest man = grid::load_manifest(*manifest);
    if (!man.stats || man.prepared.empty()) {
      throw ValidationError(manifest->string() + ": manifest has no prepared volumes");
    }
    if (grid::stats_reference(*man.stats) != grid::stats_reference(m.stats)) {
      throw FingerprintError(checkpoint.string() + " was trained on stats " +
                             grid::stats_reference(m.stats) + ", manifest has " +
                             grid::stats_reference(*man.stats));
    }
    m.prepare = man.prepare;
    m.hr_shape = grid::read_volume_header(man.resolve(man.prepared.front().hr)).shape();
  } else if (auto layout = train::checkpoint_layout(ckpt)) {
    m.prepare = layout->prepare;
    m.hr_shape = layout->hr_shape;
  } else {
    throw ValidationError(checkpoint.string() +
                          ": checkpoint records no data layout; supply the manifest");
  }
  m.params = model::build_generator<float>(m.config, 0);
  for (auto& e : m.params.entries()) e.var.node()->value = ckpt.params.get(e.name).value();
  return m;
}

grid::PairGeometry model_geometry(const Model& m, const Shape& lr_shape) {
  return grid::pair_geometry(m.hr_shape, lr_shape, m.prepare);
}

Wedge generate_wedge(const model::ParamStore<float>& params, const model::GeneratorConfig& cfg,
                     const grid::ShellGrid& lr_globe, const grid::PairGeometry& geometry,
                     long long lon_start, const NoiseMode& noise,
                     const grid::Stats& expected_stats) {
  if (lr_globe.stats != expected_stats) {
    throw ValidationError("generate_wedge: low-res volume was normalised with different stats "
                          "than the model was trained on");
  }
  const Tensor<float> input = grid::extract_input_window(lr_globe, lon_start, geometry);
  Wedge w;
  w.lon_start_lr = static_cast<long long>(wrap(lon_start, geometry.lr_lon));
  w.hr_lon_start = geometry.hr_lon_start(lon_start);
  w.hr_lat_pad = geometry.hr_lat_pad;
  w.hr_radial_start = geometry.hr_radial_start;
  w.timestep = lr_globe.timestep;
  if (noise.kind != NoiseMode::Kind::kAveraged) {
    w.data = model::generate(params, cfg, input,
                             noise.kind == NoiseMode::Kind::kZero
                                 ? model::NoiseSpec::zero()
                                 : model::NoiseSpec::seeded(noise.seed));
    return w;
  }
  auto seeds = noise.seeds();
  std::sort(seeds.begin(), seeds.end());
  Tensor<double> acc;
  for (std::uint64_t s : seeds) {
    const Tensor<float> one = model::generate(params, cfg, input, model::NoiseSpec::seeded(s));
    if (acc.size() == 0) acc = Tensor<double>(one.shape());
    for (std::size_t i = 0; i < one.size(); ++i) acc[i] += one[i];
  }
  w.data = Tensor<float>(acc.shape());
  const double inv = 1.0 / double(seeds.size());
  for (std::size_t i = 0; i < acc.size(); ++i) w.data[i] = static_cast<float>(acc[i] * inv);
  return w;
}

Wedge generate_wedge(const Model& m, const grid::ShellGrid& lr_globe, long long lon_start,
                     const NoiseMode& noise) {
  return generate_wedge(m.params, m.config, lr_globe, model_geometry(m, lr_globe.values.shape()),
                        lon_start, noise, m.stats);
}

std::vector<Wedge> generate_wedges(const Model& m, const grid::ShellGrid& lr_globe,
                                   const std::vector<long long>& starts, const NoiseMode& noise,
                                   std::size_t workers) {
  const grid::PairGeometry geo = model_geometry(m, lr_globe.values.shape());
  std::vector<Wedge> out(starts.size());
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, starts.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < starts.size(); ++i) {
      out[i] = generate_wedge(m.params, m.config, lr_globe, geo, starts[i], noise, m.stats);
    }
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i; (i = next++) < starts.size();) {
          out[i] = generate_wedge(m.params, m.config, lr_globe, geo, starts[i], noise, m.stats);
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

Wedge truth_wedge(const grid::ShellGrid& hr, const grid::PairGeometry& geometry,
                  long long lon_start) {
  Wedge w;
  w.data = grid::extract_target_window(hr, lon_start, geometry);
  w.lon_start_lr = static_cast<long long>(wrap(lon_start, geometry.lr_lon));
  w.hr_lon_start = geometry.hr_lon_start(lon_start);
  w.hr_lat_pad = geometry.hr_lat_pad;
  w.hr_radial_start = geometry.hr_radial_start;
  w.timestep = hr.timestep;
  return w;
}

Blend parse_blend(const std::string& text) {
  if (text == "feather") return Blend::kFeather;
  if (text == "average") return Blend::kAverage;
  if (text == "hard") return Blend::kHard;
  throw ValidationError("blend '" + text + "': expected feather, average or hard");
}

std::string blend_name(Blend b) {
  switch (b) {
    case Blend::kFeather:
      return "feather";
    case Blend::kAverage:
      return "average";
    case Blend::kHard:
      return "hard";
  }
  return "feather";
}

Layout layout_of(const std::vector<Wedge>& wedges, std::size_t circle) {
  if (wedges.empty()) throw ValidationError("stitch: no wedges");
  Layout l;
  l.circle = circle;
  const Wedge& first = wedges.front();
  if (first.data.rank() != 4) throw ShapeError("stitch: wedges must be rank 4");
  l.width = first.data.dim(3);
  if (l.width == 0 || l.width > circle) {
    throw ValidationError("stitch: wedge width " + std::to_string(l.width) +
                          " does not fit a circle of " + std::to_string(circle) + " columns");
  }
  for (const Wedge& w : wedges) {
    if (w.data.shape() != first.data.shape() || w.hr_lat_pad != first.hr_lat_pad ||
        w.hr_radial_start != first.hr_radial_start || w.timestep != first.timestep) {
      throw ValidationError("stitch: wedges differ in shape or provenance");
    }
    l.starts.push_back(static_cast<long long>(wrap(w.hr_lon_start, circle)));
  }
  return l;
}

std::vector<std::vector<double>> blend_weights(const Layout& l, Blend blend) {
  const auto nb = neighbours(l);
  std::vector<std::vector<double>> out(l.starts.size(), std::vector<double>(l.width, 0.0));
  for (std::size_t i = 0; i < l.starts.size(); ++i) {
    auto& w = out[i];
    switch (blend) {
      case Blend::kAverage:
        std::fill(w.begin(), w.end(), 1.0);
        break;
      case Blend::kFeather: {
        // Ramps sample (k + 0.5) / overlap so facing ramps sum to 1 and no
        // covered column gets weight 0.
        const double lo = double(nb[i].left_overlap), ro = double(nb[i].right_overlap);
        for (std::size_t j = 0; j < l.width; ++j) {
          double v = 1.0;
          if (double(j) < lo) v = std::min(v, (double(j) + 0.5) / lo);
          if (double(l.width - j) <= ro) v = std::min(v, (double(l.width - j) - 0.5) / ro);
          w[j] = v;
        }
        break;
      }
      case Blend::kHard: {
        // Centred crop: drop half of each overlap on either side.
        const std::size_t next = nb[i].next;
        const std::size_t begin = nb[i].left_overlap / 2;
        const std::size_t end =
            std::min(l.width, nb[i].to_next + nb[next].left_overlap / 2);
        for (std::size_t j = begin; j < end; ++j) w[j] = 1.0;
        break;
      }
    }
  }
  return out;
}

std::vector<std::size_t> column_multiplicity(const Layout& l) {
  std::vector<std::size_t> m(l.circle, 0);
  for (long long s : l.starts) {
    for (std::size_t j = 0; j < l.width; ++j) ++m[wrap(s + static_cast<long long>(j), l.circle)];
  }
  return m;
}

std::vector<std::size_t> seam_columns(const Layout& l, Blend blend) {
  const auto weights = blend_weights(l, blend);
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < l.starts.size(); ++i) {
    const auto& w = weights[i];
    for (std::size_t j = 0; j <= l.width; ++j) {
      const bool in = j < l.width && w[j] > 0;
      const bool was = j > 0 && w[j - 1] > 0;
      if (in != was) cols.push_back(wrap(l.starts[i] + static_cast<long long>(j), l.circle));
    }
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  // A wedge spanning the whole circle has no seam.
  if (l.width == l.circle && l.starts.size() == 1) cols.clear();
  return cols;
}

ShellAssembly::ShellAssembly(std::size_t vars, std::size_t radial, std::size_t lat,
                             std::size_t circle)
    : shape_{vars, radial, lat, circle}, accum_(shape_), weight_(circle, 0.0) {}

void ShellAssembly::add(const Wedge& wedge, const std::vector<double>& column_weights) {
  const Tensor<float>& d = wedge.data;
  const std::size_t width = d.dim(3), circle = shape_[3], lat = shape_[2];
  if (d.rank() != 4 || d.dim(0) != shape_[0] || d.dim(1) != shape_[1] ||
      d.dim(2) != lat + 2 * wedge.hr_lat_pad || column_weights.size() != width) {
    throw ShapeError("ShellAssembly: wedge " + to_string(d.shape()) + " does not fit shell " +
                     to_string(shape_));
  }
  for (std::size_t j = 0; j < width; ++j) {
    const double w = column_weights[j];
    if (w == 0) continue;
    const std::size_t c = wrap(wedge.hr_lon_start + static_cast<long long>(j), circle);
    weight_[c] += w;
    for (std::size_t v = 0; v < shape_[0]; ++v)
      for (std::size_t r = 0; r < shape_[1]; ++r)
        for (std::size_t h = 0; h < lat; ++h) {
          accum_.at(v, r, h, c) += w * double(d.at(v, r, h + wedge.hr_lat_pad, j));
        }
  }
}

Tensor<float> ShellAssembly::finalize() const {
  std::vector<std::size_t> holes;
  for (std::size_t c = 0; c < weight_.size(); ++c) {
    if (!(weight_[c] > 0)) holes.push_back(c);
  }
  if (!holes.empty()) {
    throw ValidationError("stitch: longitude columns not covered by any wedge: " +
                          column_ranges(holes));
  }
  Tensor<float> out(shape_);
  const std::size_t circle = shape_[3];
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(accum_[i] / weight_[i % circle]);
  }
  return out;
}

grid::ShellGrid stitch(const std::vector<Wedge>& wedges, std::size_t circle, Blend blend,
                       const grid::Stats& stats, const std::vector<std::string>& variables) {
  const Layout layout = layout_of(wedges, circle);
  const auto weights = blend_weights(layout, blend);
  const Tensor<float>& d0 = wedges.front().data;
  const std::size_t pad = wedges.front().hr_lat_pad;
  if (d0.dim(2) <= 2 * pad) throw ShapeError("stitch: wedge has no rows left after unpadding");
  ShellAssembly acc(d0.dim(0), d0.dim(1), d0.dim(2) - 2 * pad, circle);
  for (std::size_t i = 0; i < wedges.size(); ++i) acc.add(wedges[i], weights[i]);
  grid::ShellGrid shell;
  shell.values = acc.finalize();
  shell.variables = variables.empty() ? grid::default_variables(d0.dim(0)) : variables;
  shell.stats = stats;
  shell.timestep = wedges.front().timestep;
  shell.validate();
  return shell;
}

std::string SeamReport::json() const {
  return nlohmann::json{{"boundaries", boundaries},
                        {"boundary_mean", boundary_mean},
                        {"interior_mean", interior_mean},
                        {"ratio", std::isfinite(ratio) ? nlohmann::json(ratio) : nlohmann::json("inf")}}
      .dump(2);
}

SeamReport seam_metric(const Tensor<float>& shell, const std::vector<std::size_t>& boundaries) {
  if (shell.rank() != 4) throw ShapeError("seam_metric: expected a V x R x H x W shell");
  const std::size_t w = shell.dim(3), rows = shell.size() / w;
  std::vector<double> col(w, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* p = shell.data() + r * w;
    for (std::size_t c = 0; c < w; ++c) {
      col[c] += std::abs(double(p[c]) - double(p[(c + w - 1) % w]));
    }
  }
  std::vector<bool> is_boundary(w, false);
  for (std::size_t b : boundaries) {
    if (b >= w) throw IndexError("seam_metric: boundary column " + std::to_string(b) + " >= " + std::to_string(w));
    is_boundary[b] = true;
  }
  SeamReport rep;
  rep.boundaries = boundaries;
  std::size_t nb = 0, ni = 0;
  for (std::size_t c = 0; c < w; ++c) {
    (is_boundary[c] ? rep.boundary_mean : rep.interior_mean) += col[c] / double(rows);
    ++(is_boundary[c] ? nb : ni);
  }
  if (nb) rep.boundary_mean /= double(nb);
  if (ni) rep.interior_mean /= double(ni);
  if (rep.interior_mean > 0) {
    rep.ratio = rep.boundary_mean / rep.interior_mean;
  } else {
    rep.ratio = rep.boundary_mean > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return rep;
}

std::string plan_json(const Layout& layout, Blend blend, const std::vector<Wedge>& wedges) {
  json j;
  j["circle"] = layout.circle;
  j["width"] = layout.width;
  j["blend"] = blend_name(blend);
  j["wedges"] = json::array();
  for (const Wedge& w : wedges) {
    j["wedges"].push_back({{"lon_start_lr", w.lon_start_lr},
                           {"hr_lon_start", w.hr_lon_start},
                           {"hr_lat_pad", w.hr_lat_pad},
                           {"hr_radial_start", w.hr_radial_start}});
  }
  j["multiplicity"] = column_multiplicity(layout);
  j["seams"] = seam_columns(layout, blend);
  return j.dump(2);
}

Tensor<float> shell_slice(const grid::ShellGrid& shell, std::size_t var, std::size_t radial) {
  if (var >= shell.var_count()) {
    throw IndexError("variable index " + std::to_string(var) + " out of range (valid 0.." +
                     std::to_string(shell.var_count() - 1) + ")");
  }
  if (radial >= shell.radial()) {
    throw IndexError("radial index " + std::to_string(radial) + " out of range (valid 0.." +
                     std::to_string(shell.radial() - 1) + ")");
  }
  Tensor<float> out({shell.lat(), shell.lon()});
  const float* src = &shell.values.at(var, radial, 0, 0);
  std::copy(src, src + out.size(), out.data());
  return out;
}

void export_shell(const grid::ShellGrid& shell, const fs::path& path) {
  grid::save_volume(shell, path);
}

SliceFiles export_slice(const grid::ShellGrid& shell, std::size_t var, std::size_t radial,
                        const fs::path& prefix, float lo, float hi) {
  const Tensor<float> plane = shell_slice(shell, var, radial);
  SliceFiles f{prefix, prefix, prefix};
  f.raw += ".f32";
  f.image += ".pgm";
  f.sidecar += ".json";

  Writer raw;
  raw.f32s(plane.values());
  write_file(f.raw, raw.buffer());

  Writer img;
  img.text("P5\n" + std::to_string(shell.lon()) + " " + std::to_string(shell.lat()) + "\n255\n");
  std::vector<std::uint8_t> px(plane.size());
  const double span = double(hi) - double(lo);
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const double t = span > 0 ? (double(plane[i]) - lo) / span : 0.5;
    px[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(t, 0.0, 1.0)));
  }
  img.bytes(px.data(), px.size());
  write_file(f.image, img.buffer());

  json side{{"variable", shell.variables.at(var)},
            {"var", var},
            {"radial", radial},
            {"timestep", shell.timestep},
            {"dims", {shell.lat(), shell.lon()}},
            {"dtype", "f32le"},
            {"image_min", lo},
            {"image_max", hi}};
  if (var < shell.stats.size()) {
    side["normalization"] = {{"min", shell.stats[var].min}, {"max", shell.stats[var].max}};
  }
  const std::string text = side.dump(2);
  write_file(f.sidecar, std::vector<std::uint8_t>(text.begin(), text.end()));
  return f;
}

}  // namespace earthgan::infer
