#include "earthgan/models.hpp"

#include <cmath>

#include "earthgan/hash.hpp"
#include "earthgan/kernels.hpp"
#include "earthgan/ops.hpp"
#include "earthgan/pairs.hpp"
#include "earthgan/rng.hpp"
#include "json.hpp"

namespace earthgan::model {
namespace {

using ad::Var;
using nlohmann::json;
namespace ops = ad::ops;

constexpr std::size_t kStages = 4;
constexpr std::size_t kConvsPerStage[kStages] = {1, 2, 2, 1};
constexpr std::uint64_t kGeneratorStream = 0x6e00;
constexpr std::uint64_t kCriticStream = 0xc700;
constexpr std::uint64_t kNoiseStream = 0x9000;

std::string stage_name(std::size_t s) { return "gen/stage" + std::to_string(s + 1); }

template <typename T>
Tensor<T> init_kernel(std::size_t co, std::size_t ci, std::size_t k,
                      std::uint64_t seed, std::uint64_t stream) {
  Tensor<T> w = normal_tensor<T>({co, ci, k, k, k}, seed, stream);
  const double s = 1.0 / std::sqrt(double(ci * k * k * k));
  for (auto& v : w.values()) v = static_cast<T>(double(v) * s);
  return w;
}

// One standard-normal plane shared by every channel.
template <typename T>
Var<T> noise_field(const Shape& shape, std::uint64_t seed, std::uint64_t stream) {
  const Tensor<T> single = normal_tensor<T>({1, shape[1], shape[2], shape[3]}, seed, stream);
  Tensor<T> full(shape);
  const std::size_t n = single.size();
  for (std::size_t c = 0; c < shape[0]; ++c) {
    std::copy(single.data(), single.data() + n, full.data() + c * n);
  }
  return Var<T>::constant(std::move(full));
}

// Running skip output upsampled x2 and cropped to `like`'s spatial extents.
template <typename T>
Var<T> grow_skip(const Var<T>& out, const Shape& like) {
  Var<T> up = ops::trilinear_resize(out, 2);
  const std::size_t margin = (up.shape()[1] - like[1]) / 2;
  for (std::size_t a = 1; a < 4; ++a) {
    if (up.shape()[a] != like[a] + 2 * margin) {
      throw ShapeError("generator skip: cannot centre " + to_string(up.shape()) +
                       " on " + to_string(like));
    }
  }
  return margin ? ops::center_crop(up, margin) : up;
}

json to_json(const GeneratorConfig& c) {
  return {{"in_channels", c.in_channels}, {"out_channels", c.out_channels},
          {"channels", c.channels},       {"channel_cap", c.channel_cap},
          {"kernel", c.kernel},           {"noise", c.noise},
          {"slope", c.slope}};
}

json to_json(const CriticConfig& c) {
  return {{"in_channels", c.in_channels},
          {"channels", c.channels},
          {"channel_cap", c.channel_cap},
          {"slope", c.slope}};
}

template <typename F>
auto parse_config(const std::string& text, const char* what, F&& fill) {
  try {
    return fill(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + " config: " + e.what());
  }
}

}  // namespace

std::size_t GeneratorConfig::width(std::size_t stage) const {
  return std::min(channels.at(stage), channel_cap);
}

void GeneratorConfig::validate() const {
  if (channels.size() != kStages) {
    throw ValidationError("generator: need 4 stage widths, got " +
                          std::to_string(channels.size()));
  }
  if (kernel != 3) {
    throw ValidationError("generator: kernel must be 3 (the 8n-42 footprint law "
                          "depends on it), got " + std::to_string(kernel));
  }
  if (!in_channels || !out_channels || !channel_cap) {
    throw ValidationError("generator: channel counts must be positive");
  }
  for (std::size_t c : channels) {
    if (!c) throw ValidationError("generator: zero-width stage");
  }
  if (!(slope >= 0.0 && slope < 1.0)) {
    throw ValidationError("generator: leaky relu slope must lie in [0, 1)");
  }
}

std::size_t CriticConfig::width(std::size_t block) const {
  return std::min(channels.at(block), channel_cap);
}

void CriticConfig::validate() const {
  if (channels.empty()) throw ValidationError("critic: need at least one block");
  if (!in_channels || !channel_cap) {
    throw ValidationError("critic: channel counts must be positive");
  }
  for (std::size_t c : channels) {
    if (!c) throw ValidationError("critic: zero-width block");
  }
  if (!(slope >= 0.0 && slope < 1.0)) {
    throw ValidationError("critic: leaky relu slope must lie in [0, 1)");
  }
}

Shape generator_output_shape(const GeneratorConfig& cfg, const Shape& in) {
  cfg.validate();
  if (in.size() != 4 || in[0] != cfg.in_channels) {
    throw ShapeError("generator: expected input " + std::to_string(cfg.in_channels) +
                     " x D x H x W, got " + to_string(in));
  }
  Shape out{cfg.out_channels, 0, 0, 0};
  for (std::size_t a = 1; a < 4; ++a) {
    if (in[a] < grid::kMinInputExtent) {
      throw ShapeError("generator: input extent " + std::to_string(in[a]) +
                       " on axis " + std::to_string(a) + " is below the minimum " +
                       std::to_string(grid::kMinInputExtent));
    }
    out[a] = grid::output_extent(in[a]);
  }
  return out;
}

void check_critic_footprint(const CriticConfig& cfg, const Shape& f) {
  cfg.validate();
  if (f.size() != 4) throw ShapeError("critic: footprint must be rank 4");
  for (std::size_t a = 1; a < 4; ++a) {
    std::size_t e = f[a];
    for (std::size_t b = 0; b < cfg.channels.size(); ++b) {
      if (e < 4) {
        throw ShapeError("critic: footprint " + to_string(f) + " collapses in block " +
                         std::to_string(b + 1));
      }
      e = (e - 2) / 2;
    }
  }
}

template <typename T>
ParamStore<T> build_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore<T> p;
  std::uint64_t stream = kGeneratorStream;
  std::size_t in = cfg.in_channels;
  for (std::size_t s = 0; s < kStages; ++s) {
    const std::size_t out = cfg.width(s);
    for (std::size_t i = 0; i < kConvsPerStage[s]; ++i) {
      const std::string base = stage_name(s) + "/conv" + std::to_string(i);
      p.add(base + "/kernel", init_kernel<T>(out, in, cfg.kernel, seed, stream++));
      p.add(base + "/bias", Tensor<T>({out}));
      if (s > 0) p.add(base + "/noise_scale", Tensor<T>({out}));
      in = out;
    }
    p.add(stage_name(s) + "/skip/kernel",
          init_kernel<T>(cfg.out_channels, out, 1, seed, stream++));
    p.add(stage_name(s) + "/skip/bias", Tensor<T>({cfg.out_channels}));
  }
  return p;
}

template <typename T>
ParamStore<T> build_critic(const CriticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore<T> p;
  std::uint64_t stream = kCriticStream;
  std::size_t in = cfg.in_channels;
  for (std::size_t b = 0; b < cfg.channels.size(); ++b) {
    const std::size_t out = cfg.width(b);
    const std::string base = "critic/block" + std::to_string(b + 1) + "/conv";
    p.add(base + "/kernel", init_kernel<T>(out, in, 3, seed, stream++));
    p.add(base + "/bias", Tensor<T>({out}));
    in = out;
  }
  Tensor<T> w = normal_tensor<T>({in}, seed, stream++);
  for (auto& v : w.values()) v = static_cast<T>(double(v) / std::sqrt(double(in)));
  p.add("critic/head/weight", std::move(w));
  p.add("critic/head/bias", Tensor<T>({1}));
  return p;
}

template <typename T>
Var<T> generator_forward(const ParamStore<T>& p, const GeneratorConfig& cfg,
                         const Var<T>& input, const NoiseSpec& noise) {
  generator_output_shape(cfg, input.shape());
  const bool inject = noise.enabled && cfg.noise;
  Var<T> h = input;
  Var<T> out;
  for (std::size_t s = 0; s < kStages; ++s) {
    if (s > 0) h = ops::trilinear_resize(h, 2);
    for (std::size_t i = 0; i < kConvsPerStage[s]; ++i) {
      const std::string base = stage_name(s) + "/conv" + std::to_string(i);
      h = ops::conv3d(h, p.get(base + "/kernel"), p.get(base + "/bias"));
      if (inject && s > 0) {
        const Var<T> n = noise_field<T>(h.shape(), noise.seed, kNoiseStream + 16 * s + i);
        h = ops::add(h, ops::channel_scale(n, p.get(base + "/noise_scale")));
      }
      h = ops::leaky_relu(h, cfg.slope);
    }
    const Var<T> proj = ops::conv3d(h, p.get(stage_name(s) + "/skip/kernel"),
                                    p.get(stage_name(s) + "/skip/bias"));
    out = s == 0 ? proj : ops::add(grow_skip(out, proj.shape()), proj);
  }
  return out;
}

template <typename T>
Tensor<T> generate(const ParamStore<T>& params, const GeneratorConfig& cfg,
                   const Tensor<T>& input, const NoiseSpec& noise) {
  ad::NoGradGuard no_grad;
  return generator_forward(params, cfg, Var<T>::constant(input), noise).value();
}

template <typename T>
Tensor<T> upsample_condition(const Tensor<T>& input) {
  if (input.rank() != 4) throw ShapeError("upsample_condition: expected rank 4");
  for (std::size_t a = 1; a < 4; ++a) {
    if (input.dim(a) < grid::kMinInputExtent) {
      throw ShapeError("upsample_condition: input extent " +
                       std::to_string(input.dim(a)) + " below the minimum " +
                       std::to_string(grid::kMinInputExtent));
    }
  }
  const Tensor<T> up = kernels::trilinear_resize(input, grid::kUpsample);
  const std::size_t m = grid::kMargin;
  return kernels::crop(up, {0, m, m, m},
                       {up.dim(0), up.dim(1) - 2 * m, up.dim(2) - 2 * m, up.dim(3) - 2 * m});
}

template <typename T>
Var<T> critic_forward(const ParamStore<T>& p, const CriticConfig& cfg,
                      const Var<T>& candidate, const Var<T>& condition) {
  const Shape& a = candidate.shape();
  const Shape& b = condition.shape();
  if (a.size() != 4 || b.size() != 4 || !std::equal(a.begin() + 1, a.end(), b.begin() + 1)) {
    throw ShapeError("critic: candidate " + to_string(a) + " and condition " +
                     to_string(b) + " footprints differ");
  }
  if (candidate.shape()[0] + condition.shape()[0] != cfg.in_channels) {
    throw ShapeError("critic: expects " + std::to_string(cfg.in_channels) +
                     " channels in total, got " +
                     std::to_string(candidate.shape()[0] + condition.shape()[0]));
  }
  check_critic_footprint(cfg, candidate.shape());
  Var<T> h = ops::concat_channels(candidate, condition);
  for (std::size_t b = 0; b < cfg.channels.size(); ++b) {
    const std::string base = "critic/block" + std::to_string(b + 1) + "/conv";
    h = ops::conv3d(h, p.get(base + "/kernel"), p.get(base + "/bias"));
    h = ops::leaky_relu(h, cfg.slope);
    h = ops::avg_pool2(h);
  }
  const Var<T> pooled = ops::channel_mean(h);
  return ops::add(ops::dot(pooled, p.get("critic/head/weight")), p.get("critic/head/bias"));
}

std::string config_json(const GeneratorConfig& cfg) { return to_json(cfg).dump(); }
std::string config_json(const CriticConfig& cfg) { return to_json(cfg).dump(); }

GeneratorConfig generator_config_from_json(const std::string& text) {
  return parse_config(text, "generator", [](const json& j) {
    GeneratorConfig c;
    c.in_channels = j.value("in_channels", c.in_channels);
    c.out_channels = j.value("out_channels", c.out_channels);
    c.channels = j.value("channels", c.channels);
    c.channel_cap = j.value("channel_cap", c.channel_cap);
    c.kernel = j.value("kernel", c.kernel);
    c.noise = j.value("noise", c.noise);
    c.slope = j.value("slope", c.slope);
    c.validate();
    return c;
  });
}

CriticConfig critic_config_from_json(const std::string& text) {
  return parse_config(text, "critic", [](const json& j) {
    CriticConfig c;
    c.in_channels = j.value("in_channels", c.in_channels);
    c.channels = j.value("channels", c.channels);
    c.channel_cap = j.value("channel_cap", c.channel_cap);
    c.slope = j.value("slope", c.slope);
    c.validate();
    return c;
  });
}

std::string fingerprint(const GeneratorConfig& gen,
                        const std::optional<CriticConfig>& critic) {
  json j{{"generator", to_json(gen)}, {"critic", critic ? to_json(*critic) : json()}};
  return hex64(fnv1a64(j.dump()));
}

#define EARTHGAN_INSTANTIATE(T)                                                    \
  template ParamStore<T> build_generator<T>(const GeneratorConfig&, std::uint64_t); \
  template ParamStore<T> build_critic<T>(const CriticConfig&, std::uint64_t);       \
  template Var<T> generator_forward(const ParamStore<T>&, const GeneratorConfig&,   \
                                    const Var<T>&, const NoiseSpec&);               \
  template Tensor<T> generate(const ParamStore<T>&, const GeneratorConfig&,         \
                              const Tensor<T>&, const NoiseSpec&);                  \
  template Tensor<T> upsample_condition(const Tensor<T>&);                          \
  template Var<T> critic_forward(const ParamStore<T>&, const CriticConfig&,         \
                                 const Var<T>&, const Var<T>&);

EARTHGAN_INSTANTIATE(float)
EARTHGAN_INSTANTIATE(double)

#undef EARTHGAN_INSTANTIATE

}  // namespace earthgan::model
