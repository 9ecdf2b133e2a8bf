#include <chrono>
#include <cmath>

#include "doctest.h"
#include "earthgan/checkpoint.hpp"
#include "earthgan/kernels.hpp"
#include "earthgan/models.hpp"
#include "earthgan/ops.hpp"
#include "earthgan/penalty.hpp"
#include "test_support.hpp"

using namespace earthgan;
using namespace earthgan::model;
using earthgan::ad::Var;
using earthgan::test::random_tensor;

namespace {

GeneratorConfig micro_generator() {
  GeneratorConfig c;
  c.channel_cap = 8;
  return c;
}

CriticConfig tiny_critic() {
  CriticConfig c;
  c.channels = {2, 2, 2};
  return c;
}

// Independent critic forward: brute-force convolution and explicit loops.
double critic_oracle(const ParamStore<double>& p, const CriticConfig& cfg,
                     const Tensor<double>& cand, const Tensor<double>& cond) {
  Tensor<double> h = kernels::concat0(cand, cond);
  for (std::size_t b = 0; b < cfg.channels.size(); ++b) {
    const std::string base = "critic/block" + std::to_string(b + 1) + "/conv";
    Tensor<double> bias = p.get(base + "/bias").value();
    Tensor<double> c = test::conv3d_reference(h, p.get(base + "/kernel").value(), &bias);
    for (auto& v : c.values()) v = v > 0 ? v : cfg.slope * v;
    Tensor<double> pooled({c.dim(0), c.dim(1) / 2, c.dim(2) / 2, c.dim(3) / 2});
    for (std::size_t ch = 0; ch < pooled.dim(0); ++ch)
      for (std::size_t z = 0; z < pooled.dim(1); ++z)
        for (std::size_t y = 0; y < pooled.dim(2); ++y)
          for (std::size_t x = 0; x < pooled.dim(3); ++x) {
            double acc = 0;
            for (int i = 0; i < 8; ++i) {
              acc += c.at(ch, 2 * z + (i >> 2), 2 * y + ((i >> 1) & 1), 2 * x + (i & 1));
            }
            pooled.at(ch, z, y, x) = acc / 8;
          }
    h = std::move(pooled);
  }
  const Tensor<double>& w = p.get("critic/head/weight").value();
  const std::size_t per = h.size() / h.dim(0);
  double score = p.get("critic/head/bias").value()[0];
  for (std::size_t ch = 0; ch < h.dim(0); ++ch) {
    double mean = 0;
    for (std::size_t i = 0; i < per; ++i) mean += h[ch * per + i];
    score += w[ch] * mean / double(per);
  }
  return score;
}

// Gives every noise scale a non-zero value so seeds matter.
template <typename T>
void randomise_noise_scales(ParamStore<T>& p) {
  for (auto& e : p.entries()) {
    if (e.name.find("noise_scale") != std::string::npos) {
      for (auto& v : e.var.mutable_value().values()) v = T(0.3);
    }
  }
}

}  // namespace

TEST_CASE("count_params: single conv, empty store, default generator tally") {
  ParamStore<float> one;
  one.add("k", Tensor<float>({128, 4, 3, 3, 3}));
  one.add("b", Tensor<float>({128}));
  CHECK(count_params(one) == 13952);
  CHECK(count_params(ParamStore<float>{}) == 0);

  // Hand tally per stage: conv kernels + biases, noise scales, 1^3 skips.
  const std::size_t stage1 = (4 * 128 * 27 + 128) + (128 * 4 + 4);
  const std::size_t stage2 = (128 * 64 * 27 + 64) + 64 + (64 * 64 * 27 + 64) + 64 +
                             (64 * 4 + 4);
  const std::size_t stage3 = (64 * 32 * 27 + 32) + 32 + (32 * 32 * 27 + 32) + 32 +
                             (32 * 4 + 4);
  const std::size_t stage4 = (32 * 16 * 27 + 16) + 16 + (16 * 4 + 4);
  CHECK(stage1 + stage2 + stage3 + stage4 == 443888);
  CHECK(count_params(build_generator<float>(GeneratorConfig{}, 1)) == 443888);

  ParamStore<float> dup;
  dup.add("x", Tensor<float>({1}));
  CHECK_THROWS_AS(dup.add("x", Tensor<float>({1})), ValidationError);
}

TEST_CASE("generator shape law: out = 8n - 42 per axis") {
  GeneratorConfig def;
  CHECK(generator_output_shape(def, {4, 30, 20, 10}) == Shape{4, 198, 118, 38});
  for (std::size_t n : {7u, 8u, 10u, 20u, 30u}) {
    CHECK(generator_output_shape(def, {4, n, n, n}) == Shape{4, 8 * n - 42, 8 * n - 42, 8 * n - 42});
  }
  CHECK(generator_output_shape(def, {4, 8, 8, 8})[1] == 22);
  CHECK_THROWS_AS(generator_output_shape(def, {4, 6, 6, 6}), ShapeError);
  CHECK_THROWS_AS(generator_output_shape(def, {4, 30, 20, 6}), ShapeError);
  CHECK_THROWS_AS(generator_output_shape(def, {3, 30, 20, 10}), ShapeError);

  // Executed forwards on a narrow model, including a non-cubic input.
  const GeneratorConfig cfg = micro_generator();
  const auto p = build_generator<float>(cfg, 3);
  for (const Shape& in : {Shape{4, 7, 7, 7}, Shape{4, 8, 8, 8}, Shape{4, 10, 10, 10},
                          Shape{4, 7, 8, 10}}) {
    const auto y = generate(p, cfg, random_tensor<float>(in, 4, 0, 1), NoiseSpec::zero());
    CHECK(y.shape() == Shape{4, 8 * in[1] - 42, 8 * in[2] - 42, 8 * in[3] - 42});
  }
  CHECK_THROWS_AS(generate(p, cfg, Tensor<float>({4, 6, 8, 8}), NoiseSpec::zero()),
                  ShapeError);
}

TEST_CASE("default generator at full scale: (4,30,20,10) -> (4,198,118,38)") {
  const auto p = build_generator<float>(GeneratorConfig{}, 11);
  const auto start = std::chrono::steady_clock::now();
  const auto y = generate(p, GeneratorConfig{}, random_tensor<float>({4, 30, 20, 10}, 12, 0, 1),
                          NoiseSpec::seeded(5));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(y.shape() == Shape{4, 198, 118, 38});
  for (float v : y.values()) REQUIRE(std::isfinite(v));
  MESSAGE("full-scale forward took " << secs << " s");
}

TEST_CASE("generator: zero noise is repeatable, zero scales ignore the seed") {
  const GeneratorConfig cfg = micro_generator();
  auto p = build_generator<float>(cfg, 21);
  const auto x = random_tensor<float>({4, 8, 8, 8}, 22, 0, 1);
  const auto a = generate(p, cfg, x, NoiseSpec::zero());
  CHECK(bitwise_equal(a, generate(p, cfg, x, NoiseSpec::zero())));
  // Scales start at zero.
  CHECK(test::max_abs_diff(generate(p, cfg, x, NoiseSpec::seeded(1)),
                           generate(p, cfg, x, NoiseSpec::seeded(2))) == 0.0);
  CHECK(test::max_abs_diff(a, generate(p, cfg, x, NoiseSpec::seeded(1))) == 0.0);

  randomise_noise_scales(p);
  const auto s1 = generate(p, cfg, x, NoiseSpec::seeded(1));
  CHECK(bitwise_equal(s1, generate(p, cfg, x, NoiseSpec::seeded(1))));
  CHECK(test::max_abs_diff(s1, generate(p, cfg, x, NoiseSpec::seeded(2))) > 1e-3);
  CHECK(bitwise_equal(a, generate(p, cfg, x, NoiseSpec::zero())));

  GeneratorConfig off = cfg;
  off.noise = false;
  CHECK(bitwise_equal(generate(p, off, x, NoiseSpec::seeded(1)), a));
}

TEST_CASE("upsample_condition: shapes, constants, 21-voxel centre crop") {
  CHECK((8 * 20 - 118) / 2 == 21);
  const auto x = random_tensor<float>({4, 30, 20, 10}, 31, 0, 1);
  const auto c = upsample_condition(x);
  CHECK(c.shape() == Shape{4, 198, 118, 38});
  const auto full = kernels::trilinear_resize(x, 8);
  CHECK(bitwise_equal(c, kernels::crop(full, {0, 21, 21, 21}, {4, 198, 118, 38})));

  const auto k = upsample_condition(Tensor<float>({4, 8, 8, 8}, 0.3f));
  CHECK(k.shape() == Shape{4, 22, 22, 22});
  for (float v : k.values()) REQUIRE(v == 0.3f);
  CHECK_THROWS_AS(upsample_condition(Tensor<float>({4, 6, 8, 8})), ShapeError);
}

TEST_CASE("generator output is shift-consistent with its conditioning") {
  // Two windows one low-res column apart: outputs agree after an 8-column
  // shift, away from the edges where clamped upsampling differs.
  const GeneratorConfig cfg = micro_generator();
  const auto p = build_generator<float>(cfg, 41);
  const auto globe = random_tensor<float>({4, 8, 8, 13}, 42, 0, 1);
  const auto a = generate(p, cfg, kernels::crop(globe, {0, 0, 0, 0}, {4, 8, 8, 12}),
                          NoiseSpec::zero());
  const auto b = generate(p, cfg, kernels::crop(globe, {0, 0, 0, 1}, {4, 8, 8, 12}),
                          NoiseSpec::zero());
  REQUIRE(a.dim(3) == 54);
  const std::size_t edge = 17;
  double worst = 0;
  std::size_t compared = 0;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t z = 0; z < 22; ++z)
      for (std::size_t y = 0; y < 22; ++y)
        for (std::size_t k = edge; k + 8 + edge < 54; ++k) {
          worst = std::max(worst, double(std::abs(b.at(c, z, y, k) - a.at(c, z, y, k + 8))));
          ++compared;
        }
  CHECK(compared > 0);
  CHECK(worst <= 1e-4);
}

TEST_CASE("critic: zero inputs give the head bias, finite scores, oracle agreement") {
  const CriticConfig cfg;
  auto p = build_critic<float>(cfg, 51);
  const Var<float> zero = Var<float>::constant(Tensor<float>({4, 22, 22, 22}));
  CHECK(critic_forward(p, cfg, zero, zero).item() == 0.0f);
  p.get("critic/head/bias").node()->value[0] = 0.37f;
  CHECK(critic_forward(p, cfg, zero, zero).item() == 0.37f);

  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto x = Var<float>::constant(random_tensor<float>({4, 22, 22, 22}, 60 + s, 0, 1));
    CHECK(std::isfinite(critic_forward(p, cfg, x, x).item()));
  }

  // Known weights: a double-precision critic against the loop oracle.
  const CriticConfig small = tiny_critic();
  auto q = build_critic<double>(small, 52);
  q.get("critic/head/bias").node()->value[0] = -0.25;
  const auto real = random_tensor<double>({4, 22, 22, 22}, 53, 0, 1);
  const auto fake = random_tensor<double>({4, 22, 22, 22}, 54, 0, 1);
  const auto cond = random_tensor<double>({4, 22, 22, 22}, 55, 0, 1);
  auto score = [&](const Tensor<double>& c) {
    return critic_forward(q, small, Var<double>::constant(c), Var<double>::constant(cond)).item();
  };
  const double got = score(real) - score(fake);
  const double want = critic_oracle(q, small, real, cond) - critic_oracle(q, small, fake, cond);
  CHECK(std::abs(got - want) <= 1e-5 * std::max(1.0, std::abs(want)));

  CHECK_THROWS_AS(critic_forward(p, cfg, zero, Var<float>::constant(Tensor<float>({4, 22, 22, 21}))),
                  ShapeError);
  CHECK_THROWS_AS(critic_forward(p, cfg, Var<float>::constant(Tensor<float>({4, 14, 22, 22})),
                                 Var<float>::constant(Tensor<float>({4, 14, 22, 22}))),
                  ShapeError);
  check_critic_footprint(cfg, {4, 198, 118, 38});
}

TEST_CASE("critic gradient penalty: parameter gradient matches finite differences") {
  const CriticConfig cfg = tiny_critic();
  auto params = build_critic<double>(cfg, 71);
  CHECK(count_params(params) <= 1000);
  // Non-zero biases so every path carries signal.
  for (auto& e : params.entries()) {
    if (e.name.find("bias") != std::string::npos) {
      e.var.mutable_value() = random_tensor<double>(e.var.shape(), 72, -0.1, 0.1);
    }
  }
  const auto real = random_tensor<double>({4, 22, 22, 22}, 73, 0, 1);
  const auto fake = random_tensor<double>({4, 22, 22, 22}, 74, 0, 1);
  const auto cond = Var<double>::constant(random_tensor<double>({4, 22, 22, 22}, 75, 0, 1));
  auto gp = [&](const ParamStore<double>& p) {
    ad::ScalarFunction<double> critic = [&](const Var<double>& x) {
      return critic_forward(p, cfg, x, cond);
    };
    return ad::gradient_penalty(critic, real, fake, 0.3, 10.0);
  };
  const auto vars = params.vars();
  const auto grads = ad::grad(gp(params), vars, false, true);
  // The first block has ~16k pre-activations; a 1e-4 nudge to its kernel
  // pushes a few of them across the leaky-relu kink, where central
  // differences stop approximating the derivative. 1e-6 stays on one side.
  const double h = 1e-6;

  double diff = 0, norm_a = 0, norm_f = 0;
  for (std::size_t v = 0; v < vars.size(); ++v) {
    Tensor<double>& value = vars[v].node()->value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + h;
      const double up = gp(params).item();
      value[i] = orig - h;
      const double down = gp(params).item();
      value[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = grads[v].value()[i];
      diff += (fd - an) * (fd - an);
      norm_a += an * an;
      norm_f += fd * fd;
    }
  }
  const double rel = std::sqrt(diff) / std::sqrt(std::max(norm_a, norm_f));
  MESSAGE("critic GP relative error " << rel);
  CHECK(norm_a > 0);
  CHECK(rel <= 1e-4);
}

TEST_CASE("EGW1: bit-exact round trip, size bound, corruption detected") {
  Checkpoint c;
  c.critic = CriticConfig{};
  c.params = build_generator<float>(c.generator, 81);
  randomise_noise_scales(c.params);
  c.params.merge(build_critic<float>(*c.critic, 82));
  c.step = 1234;
  c.stats = grid::Stats{{0.f, 1.f}, {-3.f, 2.5f}, {1.f, 1.f}, {-1e-3f, 7.f}};
  const auto bytes = serialize(c);

  const Checkpoint back = deserialize(bytes, c.fingerprint());
  CHECK(back.generator == c.generator);
  CHECK(back.critic == c.critic);
  CHECK(back.step == 1234);
  CHECK(back.stats == c.stats);
  REQUIRE(back.params.size() == c.params.size());
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    CHECK(back.params.entries()[i].name == c.params.entries()[i].name);
    CHECK(bitwise_equal(back.params.entries()[i].var.value(),
                        c.params.entries()[i].var.value()));
  }

  Checkpoint gen_only;
  gen_only.params = build_generator<float>(gen_only.generator, 83);
  const auto gen_bytes = serialize(gen_only);
  MESSAGE("default generator serialises to " << gen_bytes.size() << " bytes");
  CHECK(gen_bytes.size() <= 4u * 1024 * 1024);

  for (std::size_t at : {std::size_t(5), bytes.size() / 2, bytes.size() - 1}) {
    auto bad = bytes;
    bad[at] ^= 0x01;
    CHECK_THROWS_AS(deserialize(bad), ChecksumError);
  }
  auto cut = bytes;
  cut.resize(10);
  CHECK_THROWS_AS(deserialize(cut), TruncatedError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize(magic), FormatError);
}

TEST_CASE("EGW1: fingerprint and layout mismatches are rejected") {
  Checkpoint c;
  c.generator = micro_generator();
  c.params = build_generator<float>(c.generator, 91);
  const auto bytes = serialize(c);
  CHECK_NOTHROW(deserialize(bytes, c.fingerprint()));
  CHECK_THROWS_AS(deserialize(bytes, fingerprint(GeneratorConfig{}, std::nullopt)),
                  FingerprintError);
  CHECK(fingerprint(GeneratorConfig{}, std::nullopt) != c.fingerprint());
  CHECK(fingerprint(GeneratorConfig{}, CriticConfig{}) !=
        fingerprint(GeneratorConfig{}, std::nullopt));

  // Weights of one architecture under the header of another.
  Checkpoint lie = c;
  lie.generator = GeneratorConfig{};
  lie.params = c.params.clone();
  CHECK_THROWS_AS(deserialize(serialize(lie)), FingerprintError);

  test::TempDir dir("egw");
  save_checkpoint(c, dir / "m.egw");
  const auto summary = inspect_checkpoint(dir / "m.egw");
  CHECK(summary.records.size() == c.params.size());
  CHECK(summary.header_json.find(c.fingerprint()) != std::string::npos);
  CHECK(load_checkpoint(dir / "m.egw").params.size() == c.params.size());
}
