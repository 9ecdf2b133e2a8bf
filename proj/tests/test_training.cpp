#include <cmath>
#include <limits>

#include "doctest.h"
#include "earthgan/ops.hpp"
#include "earthgan/synth.hpp"
#include "earthgan/training.hpp"
#include "earthgan/volume_io.hpp"
#include "test_support.hpp"

using namespace earthgan;
using namespace earthgan::train;
using ad::Var;
namespace fs = std::filesystem;

namespace {

const grid::PrepareParams kMicro{1.0, 8, 5, 8, 2, 8};

model::GeneratorConfig small_generator() {
  model::GeneratorConfig c;
  c.channel_cap = 8;
  return c;
}

model::CriticConfig small_critic() {
  model::CriticConfig c;
  c.channels = {4, 4, 4};
  return c;
}

grid::TrainingPair micro_pair(std::uint64_t timestep = 0, long long start = 0) {
  const auto raw = grid::synth_shell(5, {4, 57, 22, 64}, 4, timestep);
  const auto [hr, stats] = grid::minmax_normalize(grid::rescale_latlon(raw, 1.0));
  const auto lr = grid::prepare_low_res(hr, kMicro);
  const auto geo = grid::pair_geometry(hr.values.shape(), lr.values.shape(), kMicro);
  return grid::extract_pair(hr, lr, start, geo);
}

TrainConfig quiet_config() {
  TrainConfig c;
  c.noise = false;
  c.augment = false;
  return c;
}

Tensor<float> fake_of(Trainer& t, const grid::TrainingPair& pair) {
  return model::generate(t.generator(), t.generator_config(), pair.input,
                         model::NoiseSpec::zero());
}

std::vector<Tensor<float>> snapshot(const model::ParamStore<float>& p) {
  std::vector<Tensor<float>> out;
  for (const auto& e : p.entries()) out.push_back(e.var.value());
  return out;
}

bool unchanged(const model::ParamStore<float>& p, const std::vector<Tensor<float>>& before) {
  std::size_t i = 0;
  for (const auto& e : p.entries()) {
    if (!bitwise_equal(e.var.value(), before[i++])) return false;
  }
  return true;
}

float max_abs_param(const model::ParamStore<float>& p) {
  float m = 0;
  for (const auto& e : p.entries()) {
    for (float v : e.var.value().values()) m = std::max(m, std::abs(v));
  }
  return m;
}

// Two timesteps of synthetic plume data prepared at the micro geometry.
grid::Manifest micro_dataset(const fs::path& dir) {
  grid::Manifest raw;
  raw.dir = dir;
  raw.prepare = kMicro;
  for (std::uint64_t t : {0u, 1u}) {
    const std::string name = "raw_" + std::to_string(t) + ".egv";
    grid::save_volume(grid::synth_shell(9, {4, 57, 22, 64}, 4, t), dir / name);
    raw.volumes.push_back({name, t});
  }
  return grid::prepare_dataset(raw, dir / "prepared");
}

void check_same_metrics(const std::vector<StepMetrics>& a, const std::vector<StepMetrics>& b,
                        std::size_t n) {
  REQUIRE(a.size() >= n);
  REQUIRE(b.size() >= n);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(a[i].step == b[i].step);
    CHECK(a[i].timestep == b[i].timestep);
    CHECK(a[i].lon_start == b[i].lon_start);
    CHECK(std::abs(a[i].critic_loss - b[i].critic_loss) <= 1e-12);
    CHECK(std::abs(a[i].wasserstein - b[i].wasserstein) <= 1e-12);
    CHECK(std::abs(a[i].gp - b[i].gp) <= 1e-12);
    CHECK(std::abs(a[i].gen_loss - b[i].gen_loss) <= 1e-12);
    CHECK(std::abs(a[i].l1 - b[i].l1) <= 1e-12);
  }
}

}  // namespace

TEST_CASE("adam: first step from zero moves by lr, zero gradient is a no-op") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  Tensor<double> p({1}, 0.0), g({1}, 1.0), m({1}), v({1});
  adam_update(p, g, m, v, 1, cfg);
  // m = 1, v = 0.01; bias correction gives m_hat = 1, v_hat = 1.
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-7));

  Tensor<double> q({3}, std::vector<double>{0.5, -2.0, 7.0});
  const Tensor<double> before = q;
  Tensor<double> zero({3}), m2({3}), v2({3});
  adam_update(q, zero, m2, v2, 1, cfg);
  CHECK(bitwise_equal(q, before));
  CHECK_THROWS_AS(adam_update(q, Tensor<double>({2}), m2, v2, 2, cfg), ShapeError);
}

TEST_CASE("adam: hand-evaluated second step") {
  AdamConfig cfg;  // lr 1e-4, beta1 0, beta2 0.99
  Tensor<double> p({1}, 1.0), m({1}), v({1});
  adam_update(p, Tensor<double>({1}, 2.0), m, v, 1, cfg);
  adam_update(p, Tensor<double>({1}, -1.0), m, v, 2, cfg);
  const double v1 = 0.01 * 4.0;
  const double v2 = 0.99 * v1 + 0.01 * 1.0;
  const double expect = 1.0 - 1e-4 * 2.0 / (std::sqrt(v1 / 0.01) + 1e-8) -
                        1e-4 * -1.0 / (std::sqrt(v2 / (1 - 0.99 * 0.99)) + 1e-8);
  CHECK(p[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("critic_step: identical real and fake with no penalty gives zero loss") {
  TrainConfig cfg = quiet_config();
  cfg.lambda = 0;
  Trainer t(small_generator(), small_critic(), cfg, 3);
  grid::TrainingPair pair = micro_pair();
  pair.target = fake_of(t, pair);
  const CriticStepResult r = t.critic_step(pair);
  CHECK(r.loss == 0.0);
  CHECK(r.wasserstein == 0.0);
  CHECK(r.gp == 0.0);
}

TEST_CASE("critic_step: linear critic scores the elementwise offset") {
  TrainConfig cfg = quiet_config();
  cfg.lambda = 0;
  Trainer t(small_generator(), small_critic(), cfg, 4);
  t.critic_fn = [](const model::ParamStore<float>&, const Var<float>& cand,
                   const Var<float>& cond) {
    return ad::ops::sum(ad::ops::concat_channels(cand, cond));
  };
  grid::TrainingPair pair = micro_pair();
  const Tensor<float> fake = fake_of(t, pair);
  for (std::size_t i = 0; i < fake.size(); ++i) pair.target[i] = fake[i] + 1.0f;
  const double n = double(fake.size());
  const CriticStepResult r = t.critic_step(pair);
  CHECK(r.loss == doctest::Approx(-n).epsilon(1e-5));
  CHECK(r.wasserstein == doctest::Approx(n).epsilon(1e-5));
}

TEST_CASE("critic_step: clip mode bounds every critic parameter") {
  TrainConfig cfg = quiet_config();
  cfg.mode = CriticMode::kClip;
  cfg.clip = 0.01;
  Trainer t(small_generator(), small_critic(), cfg, 5);
  CHECK(max_abs_param(t.critic()) > 0.01f);
  const auto pair = micro_pair();
  for (int i = 0; i < 3; ++i) {
    const CriticStepResult r = t.critic_step(pair);
    CHECK(r.gp == 0.0);
    CHECK(max_abs_param(t.critic()) <= 0.01f);
  }
}

TEST_CASE("critic_step: penalty is non-negative and only the critic moves") {
  Trainer t(small_generator(), small_critic(), TrainConfig{}, 6);
  const auto pair = micro_pair();
  const auto gen_before = snapshot(t.generator());
  const auto critic_before = snapshot(t.critic());
  for (int i = 0; i < 4; ++i) {
    const CriticStepResult r = t.critic_step(pair);
    CHECK(r.gp >= 0.0);
    CHECK(std::isfinite(r.loss));
  }
  CHECK(unchanged(t.generator(), gen_before));
  CHECK_FALSE(unchanged(t.critic(), critic_before));
}

TEST_CASE("generator_step: constant critic leaves the generator untouched") {
  TrainConfig cfg = quiet_config();
  cfg.generator_adam.lr = 0.5;
  Trainer t(small_generator(), small_critic(), cfg, 7);
  t.critic_fn = [](const model::ParamStore<float>&, const Var<float>&, const Var<float>&) {
    return Var<float>::constant(Tensor<float>({1}, 2.5f));
  };
  const auto before = snapshot(t.generator());
  const GeneratorStepResult r = t.generator_step(micro_pair());
  CHECK(r.loss == -2.5);
  CHECK(unchanged(t.generator(), before));
}

TEST_CASE("generator_step: loss is the negated critic score, only the generator moves") {
  Trainer t(small_generator(), small_critic(), quiet_config(), 8);
  const auto pair = micro_pair();
  const Tensor<float> fake = fake_of(t, pair);
  double score;
  {
    ad::NoGradGuard off;
    score = model::critic_forward(t.critic(), t.critic_config(), Var<float>::constant(fake),
                                  Var<float>::constant(model::upsample_condition(pair.input)))
                .item();
  }
  const auto gen_before = snapshot(t.generator());
  const auto critic_before = snapshot(t.critic());
  const GeneratorStepResult r = t.generator_step(pair);
  CHECK(std::abs(r.loss + score) <= 1e-6);
  CHECK(r.l1 == doctest::Approx(mean_abs_diff(fake, pair.target)).epsilon(1e-12));
  CHECK(unchanged(t.critic(), critic_before));
  CHECK_FALSE(unchanged(t.generator(), gen_before));
}

TEST_CASE("zero learning rate leaves every parameter bitwise unchanged") {
  TrainConfig cfg;
  cfg.generator_adam.lr = 0;
  cfg.critic_adam.lr = 0;
  Trainer t(small_generator(), small_critic(), cfg, 9);
  const auto pair = micro_pair();
  const auto gen_before = snapshot(t.generator());
  const auto critic_before = snapshot(t.critic());
  t.critic_step(pair);
  t.generator_step(pair);
  CHECK(unchanged(t.generator(), gen_before));
  CHECK(unchanged(t.critic(), critic_before));
}

TEST_CASE("non-finite critic score aborts the step before any update") {
  Trainer t(small_generator(), small_critic(), quiet_config(), 10);
  t.critic_fn = [](const model::ParamStore<float>&, const Var<float>& cand, const Var<float>&) {
    return ad::ops::scale(ad::ops::sum(cand), std::numeric_limits<double>::infinity());
  };
  const auto pair = micro_pair();
  const auto gen_before = snapshot(t.generator());
  const auto critic_before = snapshot(t.critic());
  CHECK_THROWS_AS(t.critic_step(pair), DivergenceError);
  CHECK_THROWS_AS(t.generator_step(pair), DivergenceError);
  try {
    t.generator_step(pair);
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 0") != std::string::npos);
    CHECK(msg.find("gen/stage1/conv0/kernel=") != std::string::npos);
  }
  CHECK(unchanged(t.generator(), gen_before));
  CHECK(unchanged(t.critic(), critic_before));
}

TEST_CASE("overfit_single: lr 0 gives a flat non-negative trace") {
  TrainConfig cfg;
  cfg.generator_adam.lr = 0;
  cfg.critic_adam.lr = 0;
  Trainer t(small_generator(), small_critic(), cfg, 11);
  const auto trace = overfit_single(t, micro_pair(), 3);
  REQUIRE(trace.size() == 4);
  for (double v : trace) {
    CHECK(v >= 0.0);
    CHECK(v == trace[0]);
  }
  // Harness settings are restored afterwards.
  CHECK(t.config().augment);
  CHECK(t.config().noise);
}

TEST_CASE("train config: JSON round trip and validation") {
  TrainConfig c;
  c.mode = CriticMode::kClip;
  c.clip = 0.05;
  c.critic_steps = 5;
  c.generator_adam.lr = 3e-4;
  c.epochs = 7;
  c.seed = 42;
  c.checkpoint_every = 100;
  c.augment = false;
  const TrainConfig back = train_config_from_json(config_json(c));
  CHECK(config_json(back) == config_json(c));
  CHECK(back.critic_adam.lr == 1e-4);

  const RunConfig rc = parse_run_config(
      R"({"generator": {"channel_cap": 32}, "critic": {"channels": [8, 16, 32]},
          "train": {"lr": 0.001, "critic_steps": 2}})");
  CHECK(rc.generator.channel_cap == 32);
  CHECK(rc.critic.channels == std::vector<std::size_t>{8, 16, 32});
  CHECK(rc.train.generator_adam.lr == 0.001);
  CHECK(rc.train.critic_adam.lr == 0.001);
  CHECK(rc.train.critic_steps == 2);

  CHECK_THROWS_AS(train_config_from_json(R"({"batch_size": 2})"), ValidationError);
  CHECK_THROWS_AS(train_config_from_json(R"({"mode": "hinge"})"), ValidationError);
  CHECK_THROWS_AS(train_config_from_json(R"({"critic_steps": 0})"), ValidationError);
  CHECK_THROWS_AS(train_config_from_json("{not json"), FormatError);
}

TEST_CASE("metrics log: header, round trip, truncation on reopen") {
  test::TempDir dir("metrics");
  const fs::path path = dir / "metrics.csv";
  {
    MetricsLog log(path);
    for (std::uint64_t s = 1; s <= 4; ++s) {
      StepMetrics m;
      m.step = s;
      m.lon_start = -3;
      m.critic_loss = 0.1 * double(s);
      m.l1 = 1.0 / 3.0;
      log.append(m);
    }
  }
  auto rows = MetricsLog::read(path);
  REQUIRE(rows.size() == 4);
  CHECK(rows[2].critic_loss == 0.1 * 3.0);
  CHECK(rows[0].l1 == 1.0 / 3.0);
  CHECK(rows[3].lon_start == -3);
  MetricsLog reopened(path, 2);
  CHECK(MetricsLog::read(path).size() == 2);
}

TEST_CASE("train: epochs = 0 writes only the initialisation checkpoint") {
  test::TempDir dir("train0");
  const grid::Manifest m = micro_dataset(dir.path());
  TrainConfig cfg;
  cfg.epochs = 0;
  Trainer t(small_generator(), small_critic(), cfg, 12);
  t.run(m, dir / "run");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "run")) names.push_back(e.path().filename());
  std::sort(names.begin(), names.end());
  CHECK(names == std::vector<std::string>{"ckpt_000000.egw", "ckpt_000000.state.egw",
                                          "metrics.csv"});
  CHECK(MetricsLog::read(dir / "run" / "metrics.csv").empty());
  const model::Checkpoint c = model::load_checkpoint(dir / "run" / "ckpt_000000.egw");
  CHECK(c.step == 0);
  CHECK(c.stats == m.stats);
}

TEST_CASE("train: seeded runs agree, resume reproduces the uninterrupted run") {
  test::TempDir dir("train");
  const grid::Manifest m = micro_dataset(dir.path());
  TrainConfig cfg;
  cfg.seed = 17;
  cfg.epochs = 3;
  cfg.max_steps = 10;
  cfg.checkpoint_every = 4;

  Trainer a(small_generator(), small_critic(), cfg, 13);
  a.run(m, dir / "a");
  Trainer b(small_generator(), small_critic(), cfg, 13);
  b.run(m, dir / "b");
  const auto ma = MetricsLog::read(dir / "a" / "metrics.csv");
  const auto mb = MetricsLog::read(dir / "b" / "metrics.csv");
  CHECK(ma.size() == 10);
  check_same_metrics(ma, mb, 10);

  // Six pairs per epoch (2 timesteps x 3 windows): step 10 lies in epoch 1.
  CHECK(a.state().step == 10);
  CHECK(a.state().epoch == 1);
  CHECK(ma[6].epoch == 1);
  CHECK(fs::exists(dir / "a" / "ckpt_000004.egw"));
  CHECK(fs::exists(dir / "a" / "ckpt_000006.egw"));
  CHECK(fs::exists(dir / "a" / "ckpt_000008.egw"));
  CHECK(fs::exists(dir / "a" / "ckpt_000010.egw"));
  CHECK(latest_checkpoint(dir / "a") == dir / "a" / "ckpt_000010.egw");

  // Interrupt at step 4, then resume with the full step budget.
  TrainConfig early = cfg;
  early.max_steps = 4;
  Trainer c(small_generator(), small_critic(), early, 13);
  c.run(m, dir / "c");
  Trainer resumed = Trainer::resume(dir / "c" / "ckpt_000004.egw", cfg);
  CHECK(resumed.state().step == 4);
  resumed.run(m, dir / "c");
  const auto mc = MetricsLog::read(dir / "c" / "metrics.csv");
  CHECK(mc.size() == 10);
  check_same_metrics(ma, mc, 10);
  for (const auto& e : a.generator().entries()) {
    CHECK(test::max_abs_diff(e.var.value(), resumed.generator().get(e.name).value()) <= 1e-12);
  }
  for (const auto& e : a.critic().entries()) {
    CHECK(test::max_abs_diff(e.var.value(), resumed.critic().get(e.name).value()) <= 1e-12);
  }
}

TEST_CASE("train: augmentation shifts windows, mismatched models are rejected") {
  test::TempDir dir("train_aug");
  const grid::Manifest m = micro_dataset(dir.path());
  TrainConfig cfg;
  cfg.max_steps = 6;
  Trainer t(small_generator(), small_critic(), cfg, 14);
  t.run(m, dir / "run");
  const auto rows = MetricsLog::read(dir / "run" / "metrics.csv");
  bool shifted = false;
  for (const auto& r : rows) shifted |= (r.lon_start % 3 != 0);
  CHECK(shifted);

  model::GeneratorConfig wrong = small_generator();
  wrong.out_channels = 3;
  Trainer bad(wrong, small_critic(), cfg, 15);
  CHECK_THROWS_AS(bad.run(m, dir / "bad"), ValidationError);
}
