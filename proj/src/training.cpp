#include "earthgan/training.hpp"

#include <charconv>
#include <chrono>
#include <fstream>
#include <regex>
#include <sstream>

#include "earthgan/ops.hpp"
#include "earthgan/penalty.hpp"
#include "earthgan/volume_io.hpp"
#include "json.hpp"

namespace earthgan::train {
namespace fs = std::filesystem;
using ad::Var;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainStream = 0x7a17;
constexpr std::uint64_t kNoiseSeedStream = 0x7a18;

bool all_finite(const Tensor<float>& t) {
  for (float v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double l2_norm(const Tensor<float>& t) {
  double acc = 0;
  for (float v : t.values()) acc += double(v) * double(v);
  return std::sqrt(acc);
}

std::string norms(const model::ParamStore<float>& p) {
  std::ostringstream os;
  for (const auto& e : p.entries()) {
    os << ' ' << e.name << '=' << l2_norm(e.var.value());
  }
  return os.str();
}

[[noreturn]] void diverged(const char* what, const grid::TrainingPair& pair,
                           const TrainState& state, const model::ParamStore<float>& params,
                           double value) {
  std::ostringstream os;
  os << what << " is not finite (" << value << ") at step " << state.step << ", timestep "
     << pair.timestep << ", lon_start " << pair.lon_start << "; input range [";
  float lo = pair.input[0], hi = pair.input[0];
  for (float v : pair.input.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  os << lo << ", " << hi << "]; parameter norms:" << norms(params);
  throw DivergenceError(os.str());
}

std::vector<std::string> names_with_prefix(const model::ParamStore<float>& p,
                                           const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& e : p.entries()) {
    if (e.trainable && e.name.compare(0, prefix.size(), prefix) == 0) out.push_back(e.name);
  }
  return out;
}

std::vector<Tensor<float>> values_of(const std::vector<Var<float>>& vars) {
  std::vector<Tensor<float>> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(v.value());
  return out;
}

json adam_json(const AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

AdamConfig adam_from(const json& j, AdamConfig a) {
  a.lr = j.value("lr", a.lr);
  a.beta1 = j.value("beta1", a.beta1);
  a.beta2 = j.value("beta2", a.beta2);
  a.eps = j.value("eps", a.eps);
  return a;
}

json train_json(const TrainConfig& c) {
  return {{"mode", c.mode == CriticMode::kClip ? "clip" : "gp"},
          {"lambda", c.lambda},
          {"clip", c.clip},
          {"critic_steps", c.critic_steps},
          {"generator_adam", adam_json(c.generator_adam)},
          {"critic_adam", adam_json(c.critic_adam)},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"max_steps", c.max_steps},
          {"window_stride", c.window_stride},
          {"augment", c.augment},
          {"noise", c.noise}};
}

TrainConfig train_from(const json& j) {
  TrainConfig c;
  const std::string mode = j.value("mode", std::string("gp"));
  if (mode == "gp") {
    c.mode = CriticMode::kGradientPenalty;
  } else if (mode == "clip") {
    c.mode = CriticMode::kClip;
  } else {
    throw ValidationError("train config: mode must be gp or clip, got '" + mode + "'");
  }
  c.lambda = j.value("lambda", c.lambda);
  c.clip = j.value("clip", c.clip);
  c.critic_steps = j.value("critic_steps", c.critic_steps);
  // "lr" sets both optimizers; the per-network objects override it.
  if (j.contains("lr")) {
    c.generator_adam.lr = c.critic_adam.lr = j.at("lr").get<double>();
  }
  if (j.contains("generator_adam")) c.generator_adam = adam_from(j.at("generator_adam"), c.generator_adam);
  if (j.contains("critic_adam")) c.critic_adam = adam_from(j.at("critic_adam"), c.critic_adam);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.window_stride = j.value("window_stride", c.window_stride);
  c.augment = j.value("augment", c.augment);
  c.noise = j.value("noise", c.noise);
  c.validate();
  return c;
}

template <typename T>
T parse_number(const std::string& s) {
  if constexpr (std::is_floating_point_v<T>) {
    return static_cast<T>(std::stod(s));
  } else {
    T v{};
    std::from_chars(s.data(), s.data() + s.size(), v);
    return v;
  }
}

}  // namespace

void AdamState::apply(model::ParamStore<float>& params, const std::vector<std::string>& names,
                      const std::vector<Tensor<float>>& grads, const AdamConfig& cfg) {
  ++t;
  for (std::size_t i = 0; i < names.size(); ++i) {
    Tensor<float>& p = params.get(names[i]).node()->value;
    auto it = moments.find(names[i]);
    if (it == moments.end()) {
      it = moments.emplace(names[i], std::make_pair(Tensor<float>(p.shape()),
                                                    Tensor<float>(p.shape()))).first;
    }
    adam_update(p, grads[i], it->second.first, it->second.second, t, cfg);
  }
}

void TrainConfig::validate() const {
  if (batch_size != 1) {
    throw ValidationError("train config: only batch_size 1 is supported, got " +
                          std::to_string(batch_size));
  }
  if (critic_steps == 0) throw ValidationError("train config: critic_steps must be >= 1");
  if (!(lambda >= 0)) throw ValidationError("train config: lambda must be >= 0");
  if (!(clip > 0)) throw ValidationError("train config: clip must be > 0");
  if (window_stride == 0) throw ValidationError("train config: window_stride must be >= 1");
  for (const AdamConfig* a : {&generator_adam, &critic_adam}) {
    if (!(a->lr >= 0) || !(a->beta1 >= 0 && a->beta1 < 1) || !(a->beta2 >= 0 && a->beta2 < 1) ||
        !(a->eps > 0)) {
      throw ValidationError("train config: invalid Adam hyperparameters");
    }
  }
}

std::string config_json(const TrainConfig& cfg) { return train_json(cfg).dump(); }

TrainConfig train_config_from_json(const std::string& text) {
  try {
    return train_from(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig rc;
  try {
    const json j = json::parse(text);
    if (j.contains("generator")) rc.generator = model::generator_config_from_json(j.at("generator").dump());
    if (j.contains("critic")) rc.critic = model::critic_config_from_json(j.at("critic").dump());
    if (j.contains("train")) rc.train = train_from(j.at("train"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("run config: ") + e.what());
  }
  return rc;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

// ---- metrics ----------------------------------------------------------------

MetricsLog::MetricsLog(fs::path path, std::optional<std::uint64_t> keep_through)
    : path_(std::move(path)) {
  std::vector<StepMetrics> kept;
  if (fs::exists(path_)) {
    for (const auto& m : read(path_)) {
      if (!keep_through || m.step <= *keep_through) kept.push_back(m);
    }
  }
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw IoError("cannot write metrics log " + path_.string());
  out << kHeader << '\n';
  for (const auto& m : kept) out << format(m) << '\n';
  if (!out) throw IoError("failed writing metrics log " + path_.string());
}

std::string MetricsLog::format(const StepMetrics& m) {
  std::ostringstream os;
  os.precision(17);
  os << m.step << ',' << m.epoch << ',' << m.timestep << ',' << m.lon_start << ','
     << m.critic_loss << ',' << m.wasserstein << ',' << m.gp << ',' << m.gen_loss << ','
     << m.l1 << ',' << m.wall_time;
  return os.str();
}

void MetricsLog::append(const StepMetrics& m) {
  std::ofstream out(path_, std::ios::app);
  out << format(m) << '\n';
  if (!out) throw IoError("failed appending to metrics log " + path_.string());
}

std::vector<StepMetrics> MetricsLog::read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics log " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kHeader) {
    throw FormatError(path.string() + ": missing metrics header");
  }
  std::vector<StepMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw FormatError(path.string() + ": malformed metrics row '" + line + "'");
    StepMetrics m;
    m.step = parse_number<std::uint64_t>(f[0]);
    m.epoch = parse_number<std::uint64_t>(f[1]);
    m.timestep = parse_number<std::uint64_t>(f[2]);
    m.lon_start = std::stoll(f[3]);
    m.critic_loss = parse_number<double>(f[4]);
    m.wasserstein = parse_number<double>(f[5]);
    m.gp = parse_number<double>(f[6]);
    m.gen_loss = parse_number<double>(f[7]);
    m.l1 = parse_number<double>(f[8]);
    m.wall_time = parse_number<double>(f[9]);
    out.push_back(m);
  }
  return out;
}

// ---- trainer ------------------------------------------------------------------

Trainer::Trainer(model::GeneratorConfig gen, model::CriticConfig critic, TrainConfig cfg,
                 std::uint64_t init_seed)
    : gen_cfg_(std::move(gen)), critic_cfg_(std::move(critic)), cfg_(std::move(cfg)) {
  cfg_.validate();
  gen_ = model::build_generator<float>(gen_cfg_, init_seed);
  critic_ = model::build_critic<float>(critic_cfg_, init_seed + 1);
  const model::CriticConfig c = critic_cfg_;
  critic_fn = [c](const model::ParamStore<float>& p, const Var<float>& cand,
                  const Var<float>& cond) { return model::critic_forward(p, c, cand, cond); };
}

double mean_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mean_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(double(a[i]) - double(b[i]));
  return acc / double(a.size());
}

namespace {

model::NoiseSpec draw_noise(const TrainConfig& cfg, TrainState& state,
                            std::optional<std::uint64_t> explicit_seed) {
  if (explicit_seed) return model::NoiseSpec::seeded(*explicit_seed);
  if (!cfg.noise) return model::NoiseSpec::zero();
  return model::NoiseSpec::seeded(counter_hash(cfg.seed, kNoiseSeedStream, state.rng_counter++));
}

}  // namespace

CriticStepResult Trainer::critic_step(const grid::TrainingPair& pair,
                                      std::optional<std::uint64_t> noise_seed) {
  const model::NoiseSpec noise = draw_noise(cfg_, state_, noise_seed);
  const Tensor<float> fake = model::generate(gen_, gen_cfg_, pair.input, noise);
  if (fake.shape() != pair.target.shape()) {
    throw ShapeError("critic_step: generator output " + to_string(fake.shape()) +
                     " does not match target " + to_string(pair.target.shape()));
  }
  const Var<float> cond = Var<float>::constant(model::upsample_condition(pair.input));

  ad::GradModeGuard recording(true);
  const Var<float> d_real = critic_fn(critic_, Var<float>::constant(pair.target), cond);
  const Var<float> d_fake = critic_fn(critic_, Var<float>::constant(fake), cond);
  Var<float> loss = ad::ops::sub(d_fake, d_real);
  CriticStepResult r;
  r.wasserstein = double(d_real.item()) - double(d_fake.item());
  if (cfg_.mode == CriticMode::kGradientPenalty) {
    CounterRng rng(cfg_.seed, kTrainStream, state_.rng_counter);
    const double eps = rng.uniform();
    state_.rng_counter = rng.counter();
    ad::ScalarFunction<float> critic = [this, &cond](const Var<float>& x) {
      return critic_fn(critic_, x, cond);
    };
    const Var<float> gp = ad::gradient_penalty(critic, pair.target, fake, eps, cfg_.lambda);
    r.gp = gp.item();
    loss = ad::ops::add(loss, gp);
  }
  r.loss = loss.item();
  if (!std::isfinite(r.loss)) diverged("critic loss", pair, state_, critic_, r.loss);

  const auto vars = critic_.vars("critic/");
  const auto grads = values_of(ad::grad(loss, vars, false, /*allow_unused=*/true));
  for (const auto& g : grads) {
    if (!all_finite(g)) diverged("critic gradient", pair, state_, critic_, NAN);
  }
  state_.critic_adam.apply(critic_, names_with_prefix(critic_, "critic/"), grads, cfg_.critic_adam);
  if (cfg_.mode == CriticMode::kClip) {
    const float c = static_cast<float>(cfg_.clip);
    for (auto& e : critic_.entries()) {
      for (float& v : e.var.node()->value.values()) v = std::clamp(v, -c, c);
    }
  }
  return r;
}

GeneratorStepResult Trainer::generator_step(const grid::TrainingPair& pair,
                                            std::optional<std::uint64_t> noise_seed) {
  const model::NoiseSpec noise = draw_noise(cfg_, state_, noise_seed);
  const Var<float> cond = Var<float>::constant(model::upsample_condition(pair.input));
  ad::GradModeGuard recording(true);
  const Var<float> fake =
      model::generator_forward(gen_, gen_cfg_, Var<float>::constant(pair.input), noise);
  if (fake.shape() != pair.target.shape()) {
    throw ShapeError("generator_step: generator output " + to_string(fake.shape()) +
                     " does not match target " + to_string(pair.target.shape()));
  }
  const Var<float> loss = ad::ops::scale(critic_fn(critic_, fake, cond), -1.0);
  GeneratorStepResult r;
  r.loss = loss.item();
  r.l1 = mean_abs_diff(fake.value(), pair.target);
  if (!std::isfinite(r.loss)) diverged("generator loss", pair, state_, gen_, r.loss);

  const auto vars = gen_.vars("gen/");
  const auto grads = values_of(ad::grad(loss, vars, false, /*allow_unused=*/true));
  for (const auto& g : grads) {
    if (!all_finite(g)) diverged("generator gradient", pair, state_, gen_, NAN);
  }
  state_.generator_adam.apply(gen_, names_with_prefix(gen_, "gen/"), grads, cfg_.generator_adam);
  return r;
}

std::optional<DataLayout> checkpoint_layout(const model::Checkpoint& ckpt) {
  json extra;
  try {
    extra = json::parse(ckpt.extra);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint extra: ") + e.what());
  }
  if (!extra.contains("prepare") || !extra.contains("hr_shape")) return std::nullopt;
  return DataLayout{grid::prepare_params_from_json(extra.at("prepare").dump()),
                    extra.at("hr_shape").get<Shape>()};
}

fs::path checkpoint_path(const fs::path& out_dir, std::uint64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "ckpt_%06llu.egw", static_cast<unsigned long long>(step));
  return out_dir / name;
}

fs::path state_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p.replace_extension(".state.egw");
  return p;
}

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  static const std::regex pattern(R"(ckpt_(\d+)\.egw)");
  std::optional<fs::path> best;
  long long best_step = -1;
  if (!fs::is_directory(dir)) return best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern) && std::stoll(m[1]) > best_step) {
      best_step = std::stoll(m[1]);
      best = entry.path();
    }
  }
  return best;
}

fs::path Trainer::save(const fs::path& out_dir, const std::optional<grid::Stats>& stats) const {
  model::Checkpoint weights;
  weights.generator = gen_cfg_;
  weights.critic = critic_cfg_;
  weights.step = state_.step;
  weights.stats = stats;
  weights.params = gen_.clone();
  weights.params.merge(critic_);
  json extra{{"train", train_json(cfg_)}};
  if (prepare_) {
    extra["prepare"] = json::parse(grid::prepare_params_json(*prepare_));
    extra["hr_shape"] = hr_shape_;
  }
  weights.extra = extra.dump();
  const fs::path path = checkpoint_path(out_dir, state_.step);

  model::Checkpoint opt;
  opt.kind = "optimizer-state";
  opt.generator = gen_cfg_;
  opt.critic = critic_cfg_;
  opt.step = state_.step;
  opt.stats = stats;
  opt.extra = json{{"step", state_.step},
                   {"epoch", state_.epoch},
                   {"cursor", state_.cursor},
                   {"rng_counter", state_.rng_counter},
                   {"generator_t", state_.generator_adam.t},
                   {"critic_t", state_.critic_adam.t}}
                  .dump();
  for (const AdamState* a : {&state_.generator_adam, &state_.critic_adam}) {
    for (const auto& [name, mv] : a->moments) {
      opt.params.add("m:" + name, mv.first);
      opt.params.add("v:" + name, mv.second);
    }
  }
  // Sidecar first, so a weights file never exists without its state.
  model::save_checkpoint(opt, state_path(path));
  model::save_checkpoint(weights, path);
  return path;
}

Trainer Trainer::resume(const fs::path& checkpoint, const TrainConfig& cfg) {
  const model::Checkpoint weights = model::load_checkpoint(checkpoint);
  if (!weights.critic) {
    throw ValidationError(checkpoint.string() + ": checkpoint has no critic, cannot resume");
  }
  const model::Checkpoint opt = model::load_checkpoint(state_path(checkpoint), weights.fingerprint());
  if (opt.kind != "optimizer-state" || opt.step != weights.step) {
    throw FormatError(state_path(checkpoint).string() + ": optimizer state does not match " +
                      checkpoint.string());
  }
  Trainer t(weights.generator, *weights.critic, cfg, 0);
  if (auto layout = checkpoint_layout(weights)) {
    t.prepare_ = layout->prepare;
    t.hr_shape_ = layout->hr_shape;
  }
  for (auto& e : t.gen_.entries()) e.var.node()->value = weights.params.get(e.name).value();
  for (auto& e : t.critic_.entries()) e.var.node()->value = weights.params.get(e.name).value();
  const json extra = json::parse(opt.extra);
  t.state_.step = extra.at("step").get<std::uint64_t>();
  t.state_.epoch = extra.at("epoch").get<std::uint64_t>();
  t.state_.cursor = extra.at("cursor").get<std::uint64_t>();
  t.state_.rng_counter = extra.at("rng_counter").get<std::uint64_t>();
  t.state_.generator_adam.t = extra.at("generator_t").get<std::uint64_t>();
  t.state_.critic_adam.t = extra.at("critic_t").get<std::uint64_t>();
  for (const auto& e : opt.params.entries()) {
    if (e.name.rfind("m:", 0) != 0) continue;
    const std::string name = e.name.substr(2);
    AdamState& a = name.rfind("gen/", 0) == 0 ? t.state_.generator_adam : t.state_.critic_adam;
    a.moments[name] = {e.var.value(), opt.params.get("v:" + name).value()};
  }
  return t;
}

void Trainer::run(const grid::Manifest& manifest, const fs::path& out_dir) {
  grid::validate_manifest(manifest);
  const grid::PairGeometry geo = grid::manifest_geometry(manifest);
  if (model::generator_output_shape(gen_cfg_, geo.input) != geo.target) {
    throw ValidationError("train: generator maps " + to_string(geo.input) + " to " +
                          to_string(model::generator_output_shape(gen_cfg_, geo.input)) +
                          ", dataset targets are " + to_string(geo.target));
  }
  model::check_critic_footprint(critic_cfg_, geo.target);
  fs::create_directories(out_dir);
  prepare_ = manifest.prepare;
  hr_shape_ = grid::read_volume_header(manifest.resolve(manifest.prepared.at(0).hr)).shape();

  std::vector<long long> starts;
  for (std::size_t s = 0; s < geo.lr_lon; s += cfg_.window_stride) starts.push_back(static_cast<long long>(s));
  const std::uint64_t per_epoch = manifest.prepared.size() * starts.size();

  MetricsLog log(out_dir / "metrics.csv", state_.step);
  if (state_.step == 0 && !fs::exists(checkpoint_path(out_dir, 0))) save(out_dir, manifest.stats);

  const auto t0 = std::chrono::steady_clock::now();
  std::optional<std::size_t> loaded;
  grid::PreparedSample sample;
  std::uint64_t last_saved = state_.step;
  auto stop = [&] { return cfg_.max_steps && state_.step >= cfg_.max_steps; };

  try {
    while (state_.epoch < cfg_.epochs && !stop()) {
      while (state_.cursor < per_epoch && !stop()) {
        const std::size_t ti = state_.cursor / starts.size();
        const long long start = starts[state_.cursor % starts.size()];
        if (loaded != ti) {
          sample = grid::load_prepared(manifest, ti);
          loaded = ti;
        }
        long long shift = 0;
        if (cfg_.augment) {
          CounterRng rng(cfg_.seed, kTrainStream, state_.rng_counter);
          shift = static_cast<long long>(rng.below(geo.lr_lon));
          state_.rng_counter = rng.counter();
        }
        // Extracting at start - k equals extracting `start` after rotating the
        // globe by k low-res (8k high-res) columns.
        const grid::TrainingPair pair = grid::extract_pair(sample.hr, sample.lr, start - shift, geo);
        StepMetrics m;
        for (std::size_t c = 0; c < cfg_.critic_steps; ++c) {
          const CriticStepResult cr = critic_step(pair);
          m.critic_loss = cr.loss;
          m.wasserstein = cr.wasserstein;
          m.gp = cr.gp;
        }
        const GeneratorStepResult gr = generator_step(pair);
        ++state_.step;
        ++state_.cursor;
        m.step = state_.step;
        m.epoch = state_.epoch;
        m.timestep = pair.timestep;
        m.lon_start = pair.lon_start;
        m.gen_loss = gr.loss;
        m.l1 = gr.l1;
        m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.append(m);
        if (cfg_.checkpoint_every && state_.step % cfg_.checkpoint_every == 0) {
          save(out_dir, manifest.stats);
          last_saved = state_.step;
        }
      }
      if (state_.cursor >= per_epoch) {
        state_.cursor = 0;
        ++state_.epoch;
        save(out_dir, manifest.stats);
        last_saved = state_.step;
      }
    }
  } catch (const IoError&) {
    // Leave a resumable checkpoint at the last completed step if the output
    // directory is still writable.
    try {
      save(out_dir, manifest.stats);
    } catch (const Error&) {
    }
    throw;
  }
  if (last_saved != state_.step) save(out_dir, manifest.stats);
}

std::vector<double> overfit_single(Trainer& trainer, const grid::TrainingPair& pair,
                                   std::size_t steps) {
  TrainConfig& cfg = trainer.config();
  const bool augment = cfg.augment, noise = cfg.noise;
  cfg.augment = false;
  cfg.noise = false;
  std::vector<double> trace;
  trace.reserve(steps + 1);
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t c = 0; c < cfg.critic_steps; ++c) trainer.critic_step(pair);
    trace.push_back(trainer.generator_step(pair).l1);
    ++trainer.state().step;
  }
  trace.push_back(mean_abs_diff(
      model::generate(trainer.generator(), trainer.generator_config(), pair.input,
                      model::NoiseSpec::zero()),
      pair.target));
  cfg.augment = augment;
  cfg.noise = noise;
  return trace;
}

}  // namespace earthgan::train
