#include "earthgan/dataset.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "earthgan/hash.hpp"
#include "earthgan/volume_io.hpp"
#include "json.hpp"

namespace earthgan::grid {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json params_to_json(const PrepareParams& p) {
  return {{"scale_ratio", p.scale_ratio},     {"downsample", p.downsample},
          {"lat_pad", p.lat_pad},             {"radial_lr", p.radial_lr},
          {"input_lat_pad", p.input_lat_pad}, {"window_lon", p.window_lon}};
}

PrepareParams params_from_json(const json& j) {
  PrepareParams p;
  p.scale_ratio = j.value("scale_ratio", p.scale_ratio);
  p.downsample = j.value("downsample", p.downsample);
  p.lat_pad = j.value("lat_pad", p.lat_pad);
  p.radial_lr = j.value("radial_lr", p.radial_lr);
  p.input_lat_pad = j.value("input_lat_pad", p.input_lat_pad);
  p.window_lon = j.value("window_lon", p.window_lon);
  return p;
}

std::string relative_to(const fs::path& target, const fs::path& base) {
  std::error_code ec;
  auto rel = fs::relative(fs::absolute(target), fs::absolute(base), ec);
  if (ec || rel.empty()) return fs::absolute(target).string();
  return rel.generic_string();
}

ShellGrid rescaled(const ShellGrid& raw, double ratio) {
  return ratio == 1.0 ? raw : rescale_latlon(raw, ratio);
}

}  // namespace

std::string prepare_params_json(const PrepareParams& params) {
  return params_to_json(params).dump();
}

PrepareParams prepare_params_from_json(const std::string& text) {
  try {
    return params_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("prepare params: ") + e.what());
  }
}

fs::path Manifest::resolve(const std::string& p) const {
  fs::path path(p);
  return path.is_absolute() ? path : dir / path;
}

Manifest parse_manifest(const std::string& text, const fs::path& dir) {
  Manifest m;
  m.dir = dir;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw FormatError("manifest: top level must be an object");
    m.variables = j.value("variables", std::vector<std::string>{});
    for (const auto& v : j.value("volumes", json::array())) {
      m.volumes.push_back({v.at("path").get<std::string>(),
                           v.value("timestep", std::uint64_t{0})});
    }
    if (j.contains("prepare")) m.prepare = params_from_json(j.at("prepare"));
    if (j.contains("stats") && !j.at("stats").is_null()) {
      Stats s;
      for (const auto& r : j.at("stats")) {
        s.push_back({r.at("min").get<float>(), r.at("max").get<float>()});
      }
      m.stats = std::move(s);
    }
    for (const auto& e : j.value("prepared", json::array())) {
      m.prepared.push_back({e.at("timestep").get<std::uint64_t>(),
                            e.at("hr").get<std::string>(),
                            e.at("lr").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

std::string dump_manifest(const Manifest& m) {
  json j;
  j["format"] = "earthgan-manifest";
  j["version"] = 1;
  j["variables"] = m.variables;
  j["volumes"] = json::array();
  for (const auto& v : m.volumes) {
    j["volumes"].push_back({{"path", v.path}, {"timestep", v.timestep}});
  }
  j["prepare"] = params_to_json(m.prepare);
  if (m.stats) {
    json s = json::array();
    for (const auto& r : *m.stats) s.push_back({{"min", r.min}, {"max", r.max}});
    j["stats"] = s;
    j["stats_ref"] = stats_reference(*m.stats);
  } else {
    j["stats"] = nullptr;
  }
  j["prepared"] = json::array();
  for (const auto& e : m.prepared) {
    j["prepared"].push_back({{"timestep", e.timestep}, {"hr", e.hr}, {"lr", e.lr}});
  }
  return j.dump(2) + "\n";
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path().empty() ? fs::path(".")
                                                             : path.parent_path());
}

void save_manifest(const Manifest& m, const fs::path& path) {
  const std::string text = dump_manifest(m);
  {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << text;
    if (!out) throw IoError("failed writing manifest " + path.string());
  }
}

std::string stats_reference(const Stats& stats) {
  std::string bytes;
  for (const auto& r : stats) {
    char buf[8];
    std::memcpy(buf, &r.min, 4);
    std::memcpy(buf + 4, &r.max, 4);
    bytes.append(buf, 8);
  }
  return hex64(fnv1a64(bytes));
}

void validate_manifest(const Manifest& m) {
  for (const auto& v : m.volumes) {
    if (!fs::exists(m.resolve(v.path))) {
      throw ValidationError("manifest: missing volume " + m.resolve(v.path).string());
    }
  }
  if (m.prepared.empty()) return;
  if (!m.stats) throw ValidationError("manifest: prepared volumes without stats");
  std::set<std::uint64_t> seen;
  std::optional<Shape> hr_shape, lr_shape;
  for (const auto& e : m.prepared) {
    if (!seen.insert(e.timestep).second) {
      throw ValidationError("manifest: duplicate timestep " + std::to_string(e.timestep));
    }
    for (const auto* p : {&e.hr, &e.lr}) {
      if (!fs::exists(m.resolve(*p))) {
        throw ValidationError("manifest: missing prepared volume " +
                              m.resolve(*p).string());
      }
    }
    const auto hr = read_volume_header(m.resolve(e.hr));
    const auto lr = read_volume_header(m.resolve(e.lr));
    if (hr.timestep != e.timestep || lr.timestep != e.timestep) {
      throw ValidationError("manifest: timestep mismatch in " + e.hr + " / " + e.lr);
    }
    if (hr.stats != *m.stats || lr.stats != *m.stats) {
      throw ValidationError("manifest: " + e.hr + " not normalised with manifest stats");
    }
    if (hr_shape && (hr.shape() != *hr_shape || lr.shape() != *lr_shape)) {
      throw ValidationError("manifest: prepared volumes differ in shape");
    }
    hr_shape = hr.shape();
    lr_shape = lr.shape();
  }
  pair_geometry(*hr_shape, *lr_shape, m.prepare);
}

ShellGrid prepare_high_res(const ShellGrid& raw, const Stats& stats,
                           const PrepareParams& params) {
  return normalize_with(rescaled(raw, params.scale_ratio), stats);
}

ShellGrid prepare_low_res(const ShellGrid& high_res, const PrepareParams& params) {
  ShellGrid padded = mirror_pad(high_res, {params.lat_pad, params.lat_pad, 0, 0});
  ShellGrid pooled = block_downsample_latlon(padded, params.downsample);
  return select_radial(pooled, params.radial_lr);
}

Manifest prepare_dataset(const Manifest& raw, const fs::path& out_dir) {
  if (raw.volumes.empty()) throw ValidationError("prepare: manifest lists no volumes");
  validate_manifest(Manifest{raw.dir, raw.variables, raw.volumes, raw.prepare,
                             raw.stats, {}});
  fs::create_directories(out_dir);

  Manifest out;
  out.dir = out_dir;
  out.prepare = raw.prepare;
  out.variables = raw.variables;
  for (const auto& v : raw.volumes) {
    out.volumes.push_back({relative_to(raw.resolve(v.path), out_dir), v.timestep});
  }

  std::optional<Stats> stats = raw.stats;
  if (!stats) {
    for (const auto& v : raw.volumes) {
      const ShellGrid g = rescaled(load_volume(raw.resolve(v.path)), raw.prepare.scale_ratio);
      const Stats s = observed_range(g.values);
      stats = stats ? merge_ranges(*stats, s) : s;
    }
  }
  out.stats = stats;

  std::set<std::uint64_t> seen;
  for (const auto& v : raw.volumes) {
    if (!seen.insert(v.timestep).second) {
      throw ValidationError("prepare: duplicate timestep " + std::to_string(v.timestep));
    }
    ShellGrid grid = load_volume(raw.resolve(v.path));
    grid.timestep = v.timestep;
    if (out.variables.empty()) out.variables = grid.variables;
    if (grid.variables != out.variables) {
      throw ValidationError("prepare: " + v.path + " has different variables");
    }
    ShellGrid hr = prepare_high_res(grid, *stats, raw.prepare);
    ShellGrid lr = prepare_low_res(hr, raw.prepare);
    const std::string hr_name = "hr_" + std::to_string(v.timestep) + ".egv";
    const std::string lr_name = "lr_" + std::to_string(v.timestep) + ".egv";
    save_volume(hr, out_dir / hr_name);
    save_volume(lr, out_dir / lr_name);
    out.prepared.push_back({v.timestep, hr_name, lr_name});
  }
  validate_manifest(out);
  save_manifest(out, out_dir / "manifest.json");
  return out;
}

PreparedSample load_prepared(const Manifest& m, std::size_t index) {
  if (index >= m.prepared.size()) {
    throw IndexError("prepared entry " + std::to_string(index) + " out of range (" +
                     std::to_string(m.prepared.size()) + " entries)");
  }
  const auto& e = m.prepared[index];
  PreparedSample s{load_volume(m.resolve(e.hr)), load_volume(m.resolve(e.lr))};
  if (m.stats && (s.hr.stats != *m.stats || s.lr.stats != *m.stats)) {
    throw ValidationError("prepared volume " + e.hr + " does not carry manifest stats");
  }
  return s;
}

std::optional<std::size_t> find_timestep(const Manifest& m, std::uint64_t timestep) {
  for (std::size_t i = 0; i < m.prepared.size(); ++i) {
    if (m.prepared[i].timestep == timestep) return i;
  }
  return std::nullopt;
}

PairGeometry manifest_geometry(const Manifest& m) {
  if (m.prepared.empty()) throw ValidationError("manifest has no prepared volumes");
  const auto hr = read_volume_header(m.resolve(m.prepared.front().hr));
  const auto lr = read_volume_header(m.resolve(m.prepared.front().lr));
  return pair_geometry(hr.shape(), lr.shape(), m.prepare);
}

}  // namespace earthgan::grid
