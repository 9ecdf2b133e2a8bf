#include "earthgan/service.hpp"

#include <bit>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "earthgan/volume_io.hpp"
#include "json.hpp"

namespace earthgan::service {
namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "binary responses are written as host floats and must be little-endian");

namespace {

// Malformed query parameter; becomes a 400.
struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Known resource that is not available in this deployment; becomes a 409.
struct Conflict : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Saturated : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::string* find(const Request& r, const std::string& name) {
  auto it = r.params.find(name);
  return it == r.params.end() ? nullptr : &it->second;
}

std::uint64_t uint_param(const Request& r, const std::string& name,
                         std::optional<std::uint64_t> fallback = std::nullopt) {
  const std::string* v = find(r, name);
  if (!v) {
    if (fallback) return *fallback;
    throw BadRequest("missing query parameter '" + name + "'");
  }
  if (v->empty() || v->size() > 18 || v->find_first_not_of("0123456789") != std::string::npos) {
    throw BadRequest("query parameter '" + name + "' must be a non-negative integer, got '" +
                     *v + "'");
  }
  return std::stoull(*v);
}

infer::NoiseMode noise_param(const Request& r) {
  const std::string* v = find(r, "noise");
  if (!v) return infer::NoiseMode::zero();
  try {
    return infer::NoiseMode::parse(*v);
  } catch (const ValidationError& e) {
    throw BadRequest(e.what());
  }
}

Response json_response(int status, const json& body) {
  Response r;
  r.status = status;
  r.body = body.dump();
  return r;
}

Response error_response(int status, const std::string& message) {
  return json_response(status, json{{"error", message}, {"status", status}});
}

std::string dims_header(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out;
}

Response binary_response(const Tensor<float>& t) {
  Response r;
  r.content_type = "application/octet-stream";
  r.body.assign(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  r.headers["X-Dims"] = dims_header(t.shape());
  r.headers["X-Dtype"] = "f32le";
  float lo = std::numeric_limits<float>::infinity(), hi = -lo;
  for (float v : t.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::ostringstream a, b;
  a.precision(9);
  b.precision(9);
  a << lo;
  b << hi;
  r.headers["X-Value-Min"] = a.str();
  r.headers["X-Value-Max"] = b.str();
  return r;
}

// RAII slot in the admission gate.
class Slot {
 public:
  Slot(Admission& a, int timeout_ms) : a_(a) {
    if (!a_.enter(std::chrono::milliseconds(timeout_ms))) {
      throw Saturated("worker pool saturated, retry later");
    }
  }
  ~Slot() { a_.leave(); }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  Admission& a_;
};

std::size_t env_size(const char* name, std::size_t fallback) {
  const char* v = std::getenv(name);
  if (!v || !*v) return fallback;
  const std::string s(v);
  if (s.find_first_not_of("0123456789") != std::string::npos) {
    throw ValidationError(std::string(name) + " must be a non-negative integer, got '" + s + "'");
  }
  return std::stoull(s);
}

}  // namespace

// ---- config -------------------------------------------------------------------

ServerConfig ServerConfig::parse(const std::string& text, const fs::path& base) {
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  ServerConfig c;
  try {
    const json j = json::parse(text);
    c.bind = j.value("bind", c.bind);
    c.port = j.value("port", c.port);
    if (!j.contains("checkpoint") || !j.contains("manifest")) {
      throw ValidationError("server config: 'checkpoint' and 'manifest' are required");
    }
    c.checkpoint = resolve(j.at("checkpoint").get<std::string>());
    c.manifest = resolve(j.at("manifest").get<std::string>());
    c.workers = j.value("workers", c.workers);
    c.queue = j.value("queue", c.queue);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.truth = j.value("truth", c.truth);
    c.stride = j.value("stride", c.stride);
    c.blend = j.value("blend", c.blend);
    c.cache_entries = j.value("cache_entries", c.cache_entries);
    if (j.contains("metrics")) c.metrics = resolve(j.at("metrics").get<std::string>());
    const json shells = j.value("fake_shells", json::object());
    for (const auto& [k, v] : shells.items()) {
      c.fake_shells[std::stoull(k)] = resolve(v.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("server config: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ValidationError("server config: fake_shells keys must be timesteps");
  }
  if (c.workers == 0) throw ValidationError("server config: workers must be >= 1");
  if (c.port < 0 || c.port > 65535) throw ValidationError("server config: port out of range");
  return c;
}

ServerConfig ServerConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open server config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

void ServerConfig::apply_env() {
  if (const char* b = std::getenv("EARTHGAN_BIND"); b && *b) bind = b;
  port = static_cast<int>(env_size("EARTHGAN_PORT", static_cast<std::size_t>(port)));
  if (port > 65535) throw ValidationError("EARTHGAN_PORT out of range");
  workers = env_size("EARTHGAN_WORKERS", workers);
  if (workers == 0) throw ValidationError("EARTHGAN_WORKERS must be >= 1");
}

// ---- admission ----------------------------------------------------------------

Admission::Admission(std::size_t slots, std::size_t queue) : slots_(slots), queue_(queue) {}

bool Admission::enter(std::chrono::milliseconds wait) {
  std::unique_lock lock(mu_);
  if (active_ < slots_) {
    ++active_;
    return true;
  }
  if (waiting_ >= queue_) return false;
  ++waiting_;
  const bool got = cv_.wait_for(lock, wait, [&] { return active_ < slots_; });
  --waiting_;
  if (got) ++active_;
  return got;
}

void Admission::leave() {
  {
    std::lock_guard lock(mu_);
    --active_;
  }
  cv_.notify_one();
}

std::size_t Admission::active() const {
  std::lock_guard lock(mu_);
  return active_;
}

std::size_t Admission::waiting() const {
  std::lock_guard lock(mu_);
  return waiting_;
}

// ---- service ------------------------------------------------------------------

Service::Service(ServerConfig cfg)
    : cfg_(std::move(cfg)),
      manifest_(grid::load_manifest(cfg_.manifest)),
      model_(infer::load_model(cfg_.checkpoint, cfg_.manifest)),
      blend_(infer::parse_blend(cfg_.blend)),
      admission_(cfg_.workers, cfg_.queue),
      shells_(cfg_.cache_entries),
      inputs_(cfg_.cache_entries) {
  grid::validate_manifest(manifest_);
  const Shape lr_shape =
      grid::read_volume_header(manifest_.resolve(manifest_.prepared.front().lr)).shape();
  geometry_ = infer::model_geometry(model_, lr_shape);
  starts_ = infer::plan_wedges(geometry_.lr_lon, cfg_.stride);
  if (model::generator_output_shape(model_.config, geometry_.input) != geometry_.target) {
    throw ValidationError("serve: checkpoint generator does not fit the dataset windows");
  }
}

std::size_t Service::timestep_index(std::uint64_t t) const {
  if (auto i = grid::find_timestep(manifest_, t)) return *i;
  throw IndexError("unknown timestep " + std::to_string(t));
}

std::shared_ptr<const grid::ShellGrid> Service::truth_shell(std::uint64_t t) {
  const std::size_t idx = timestep_index(t);
  return shells_.get("truth|" + std::to_string(t), [&] {
    const grid::ShellGrid hr = grid::load_volume(manifest_.resolve(manifest_.prepared[idx].hr));
    return std::make_shared<const grid::ShellGrid>(grid::center_radial(hr, geometry_.target[1]));
  });
}

std::shared_ptr<const grid::ShellGrid> Service::fake_shell(std::uint64_t t,
                                                           const infer::NoiseMode& noise) {
  const std::size_t idx = timestep_index(t);
  auto fixed = cfg_.fake_shells.find(t);
  if (fixed != cfg_.fake_shells.end()) {
    return shells_.get("fixed|" + std::to_string(t), [&] {
      grid::ShellGrid g = grid::load_volume(fixed->second);
      if (g.radial() > geometry_.target[1]) g = grid::center_radial(g, geometry_.target[1]);
      const Shape want{geometry_.target[0], geometry_.target[1], geometry_.hr_lat, geometry_.hr_lon};
      if (g.values.shape() != want) {
        throw ValidationError(fixed->second.string() + ": shell " + to_string(g.values.shape()) +
                              " does not match " + to_string(want));
      }
      return std::make_shared<const grid::ShellGrid>(std::move(g));
    });
  }
  return shells_.get("fake|" + std::to_string(t) + "|" + noise.str(), [&] {
    const auto lr = inputs_.get("lr|" + std::to_string(t), [&] {
      return std::make_shared<const grid::ShellGrid>(
          grid::load_volume(manifest_.resolve(manifest_.prepared[idx].lr)));
    });
    const auto wedges = infer::generate_wedges(model_, *lr, starts_, noise, 1);
    return std::make_shared<const grid::ShellGrid>(
        infer::stitch(wedges, geometry_.hr_lon, blend_, model_.stats, lr->variables));
  });
}

Response Service::handle(const Request& req) {
  try {
    if (req.path == "/api/meta") return meta();
    if (req.path == "/api/shell") return shell(req);
    if (req.path == "/api/wedge") return wedge(req);
    if (req.path == "/api/metrics") return metrics(req);
    return error_response(404, "no such endpoint: " + req.path);
  } catch (const BadRequest& e) {
    return error_response(400, e.what());
  } catch (const Conflict& e) {
    return error_response(409, e.what());
  } catch (const Saturated& e) {
    return error_response(503, e.what());
  } catch (const IndexError& e) {
    return error_response(404, e.what());
  } catch (const Error& e) {
    return error_response(500, std::string(e.kind()) + ": " + e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

Response Service::meta() const {
  json stats = json::array();
  for (const auto& r : model_.stats) stats.push_back({{"min", r.min}, {"max", r.max}});
  json timesteps = json::array();
  for (const auto& e : manifest_.prepared) timesteps.push_back(e.timestep);
  json sources = {"fake"};
  if (cfg_.truth) {
    sources.push_back("truth");
    sources.push_back("diff");
  }
  json j{{"variables", manifest_.variables.empty() ? grid::default_variables(geometry_.target[0])
                                                   : manifest_.variables},
         {"dims",
          {{"vars", geometry_.target[0]},
           {"radial", geometry_.target[1]},
           {"lat", geometry_.hr_lat},
           {"lon", geometry_.hr_lon}}},
         {"radial_count", geometry_.target[1]},
         {"wedge_dims", geometry_.target},
         {"lr_lon", geometry_.lr_lon},
         {"timesteps", timesteps},
         {"fingerprint", model_.fingerprint},
         {"step", model_.step},
         {"stats", stats},
         {"stats_ref", grid::stats_reference(model_.stats)},
         {"normalized", true},
         {"sources", sources},
         {"noise_modes", {"zero", "seed:N", "avg:N"}},
         {"stride", cfg_.stride},
         {"blend", infer::blend_name(blend_)}};
  return json_response(200, j);
}

Response Service::shell(const Request& req) {
  const std::uint64_t t = uint_param(req, "t");
  const std::uint64_t var = uint_param(req, "var");
  const std::uint64_t r = uint_param(req, "r");
  const std::string* src = find(req, "source");
  const std::string source = src ? *src : "fake";
  const infer::NoiseMode noise = noise_param(req);
  if (source != "fake" && source != "truth" && source != "diff") {
    throw IndexError("unknown source '" + source + "' (fake, truth or diff)");
  }
  if ((source == "truth" || source == "diff") && !cfg_.truth) {
    throw Conflict("ground truth not loaded; source '" + source + "' unavailable");
  }
  timestep_index(t);
  if (var >= geometry_.target[0]) {
    throw IndexError("variable index " + std::to_string(var) + " out of range (valid 0.." +
                     std::to_string(geometry_.target[0] - 1) + ")");
  }
  if (r >= geometry_.target[1]) {
    throw IndexError("radial index " + std::to_string(r) + " out of range (valid 0.." +
                     std::to_string(geometry_.target[1] - 1) + ")");
  }
  Slot slot(admission_, cfg_.timeout_ms);
  Tensor<float> plane;
  if (source == "truth") {
    plane = infer::shell_slice(*truth_shell(t), var, r);
  } else {
    plane = infer::shell_slice(*fake_shell(t, noise), var, r);
    if (source == "diff") {
      const Tensor<float> truth = infer::shell_slice(*truth_shell(t), var, r);
      for (std::size_t i = 0; i < plane.size(); ++i) plane[i] -= truth[i];
    }
  }
  Response resp = binary_response(plane);
  resp.headers["X-Source"] = source;
  resp.headers["X-Noise"] = noise.str();
  return resp;
}

Response Service::wedge(const Request& req) {
  const std::uint64_t t = uint_param(req, "t");
  const std::uint64_t start = uint_param(req, "lon_start");
  const infer::NoiseMode noise = noise_param(req);
  const std::size_t idx = timestep_index(t);
  if (start >= geometry_.lr_lon) {
    throw IndexError("lon_start " + std::to_string(start) + " out of range (valid 0.." +
                     std::to_string(geometry_.lr_lon - 1) + ")");
  }
  Slot slot(admission_, cfg_.timeout_ms);
  const auto lr = inputs_.get("lr|" + std::to_string(t), [&] {
    return std::make_shared<const grid::ShellGrid>(
        grid::load_volume(manifest_.resolve(manifest_.prepared[idx].lr)));
  });
  const infer::Wedge w = infer::generate_wedge(model_.params, model_.config, *lr, geometry_,
                                               static_cast<long long>(start), noise, model_.stats);
  Response resp = binary_response(w.data);
  resp.headers["X-Hr-Lon-Start"] = std::to_string(w.hr_lon_start);
  resp.headers["X-Hr-Lat-Pad"] = std::to_string(w.hr_lat_pad);
  resp.headers["X-Noise"] = noise.str();
  return resp;
}

Response Service::metrics(const Request& req) const {
  const fs::path path = cfg_.metrics ? *cfg_.metrics : cfg_.checkpoint.parent_path() / "metrics.csv";
  if (!fs::exists(path)) throw IndexError("no metrics log for the loaded checkpoint");
  const std::uint64_t n = uint_param(req, "n", 200);
  std::ifstream in(path);
  std::string header, line;
  std::getline(in, header);
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  Response r;
  r.content_type = "text/csv";
  r.body = header + "\n";
  const std::size_t first = n == 0 || n >= lines.size() ? 0 : lines.size() - n;
  for (std::size_t i = first; i < lines.size(); ++i) r.body += lines[i] + "\n";
  return r;
}

}  // namespace earthgan::service
