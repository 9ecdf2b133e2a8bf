#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "earthgan/binary.hpp"
#include "earthgan/dataset.hpp"
#include "earthgan/kernels.hpp"
#include "earthgan/pairs.hpp"
#include "earthgan/synth.hpp"
#include "earthgan/volume_io.hpp"
#include "test_support.hpp"

using namespace earthgan;
using namespace earthgan::grid;
using earthgan::test::random_tensor;

namespace {

ShellGrid random_grid(const Shape& shape, std::uint64_t seed) {
  return make_grid(random_tensor<float>(shape, seed, 0.0, 1.0), seed);
}

ShellGrid constant_grid(const Shape& shape, float v) {
  return make_grid(Tensor<float>(shape, v));
}

// Value encodes the longitude column, so windows can be located exactly.
ShellGrid column_grid(const Shape& shape) {
  Tensor<float> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = float(i % shape[3]);
  return make_grid(std::move(t));
}

std::vector<float> sorted_values(const Tensor<float>& t, std::size_t var) {
  const std::size_t n = t.size() / t.dim(0);
  std::vector<float> v(t.data() + var * n, t.data() + (var + 1) * n);
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("EGV1: save then load is bit-exact") {
  test::TempDir dir("egv");
  ShellGrid g = random_grid({4, 8, 12, 24}, 3);
  g.timestep = 42;
  save_volume(g, dir / "a.egv");
  ShellGrid back = load_volume(dir / "a.egv");
  CHECK(bitwise_equal(back.values, g.values));
  CHECK(back.variables == g.variables);
  CHECK(back.stats == g.stats);
  CHECK(back.timestep == 42);
  CHECK(std::filesystem::file_size(dir / "a.egv") ==
        4 + 20 + 8 + 4 * (8 + 32) + 4 * 8 * 12 * 24 * 4);

  const VolumeHeader h = read_volume_header(dir / "a.egv");
  CHECK(h.shape() == Shape{4, 8, 12, 24});
  CHECK(h.variables[1] == "v_x");
}

TEST_CASE("EGV1: wrong payload length and bad magic are distinct errors") {
  ShellGrid g = random_grid({4, 8, 12, 24}, 4);
  auto bytes = encode_volume(g);
  auto short_payload = bytes;
  short_payload.resize(bytes.size() - 4);
  CHECK_THROWS_AS(decode_volume(short_payload), TruncatedError);
  auto long_payload = bytes;
  long_payload.push_back(0);
  CHECK_THROWS_AS(decode_volume(long_payload), TruncatedError);
  auto header_only = bytes;
  header_only.resize(10);
  CHECK_THROWS_AS(decode_volume(header_only), TruncatedError);

  auto bad_magic = bytes;
  bad_magic[3] = 'X';
  try {
    decode_volume(bad_magic);
    FAIL("bad magic accepted");
  } catch (const TruncatedError&) {
    FAIL("bad magic reported as truncation");
  } catch (const FormatError& e) {
    CHECK(std::string(e.kind()) == "format");
  }
  CHECK_THROWS_AS(load_volume("/nonexistent/x.egv"), IoError);
}

TEST_CASE("rescale_latlon: 180x360 at 0.6 is 108x216; constants and identity") {
  ShellGrid g = constant_grid({1, 1, 180, 360}, 0.37f);
  ShellGrid s = rescale_latlon(g, 0.6);
  CHECK(s.values.shape() == Shape{1, 1, 108, 216});
  for (float v : s.values.values()) REQUIRE(v == 0.37f);

  ShellGrid r = random_grid({2, 3, 10, 20}, 5);
  CHECK(bitwise_equal(rescale_latlon(r, 1.0).values, r.values));
  CHECK_THROWS_AS(rescale_latlon(r, 0.0), ValidationError);
  CHECK_THROWS_AS(rescale_latlon(r, 1.5), ValidationError);
  CHECK_THROWS_AS(rescale_latlon(r, 0.01), ValidationError);
}

TEST_CASE("minmax_normalize: hand values, round trip, degenerate variable") {
  ShellGrid g = make_grid(Tensor<float>({1, 1, 1, 3}, std::vector<float>{2, 4, 6}));
  auto [n, stats] = minmax_normalize(g);
  CHECK(n.values[0] == 0.0f);
  CHECK(n.values[1] == 0.5f);
  CHECK(n.values[2] == 1.0f);
  CHECK(stats[0] == VarRange{2, 6});

  ShellGrid r = make_grid(random_tensor<float>({4, 5, 6, 7}, 6, -300.0, 4000.0));
  auto [rn, rs] = minmax_normalize(r);
  for (float v : rn.values.values()) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  CHECK(test::relative_error(denormalize(rn, rs).values, r.values) <= 1e-6);

  Tensor<float> c = random_tensor<float>({2, 2, 3, 3}, 7);
  std::fill(c.data(), c.data() + 18, 9.5f);
  auto [cn, cs] = minmax_normalize(make_grid(c));
  CHECK(cs[0].degenerate());
  CHECK_FALSE(cs[1].degenerate());
  for (std::size_t i = 0; i < 18; ++i) CHECK(cn.values[i] == 0.5f);
  CHECK(denormalize(cn, cs).values[0] == 9.5f);
}

TEST_CASE("mirror_pad: reflection excludes the edge sample") {
  Tensor<float> row({1, 1, 1, 4}, std::vector<float>{1, 2, 3, 4});
  auto p = mirror_pad_axis(row, 3, 2, 2);
  CHECK(p.storage() == std::vector<float>{3, 2, 1, 2, 3, 4, 3, 2});
  CHECK(bitwise_equal(mirror_pad_axis(row, 3, 0, 0), row));
  CHECK_THROWS_AS(mirror_pad_axis(row, 3, 4, 0), ValidationError);

  ShellGrid g = random_grid({1, 2, 108, 216}, 8);
  CHECK(mirror_pad(g, {2, 2, 0, 0}).lat() == 112);
}

TEST_CASE("mirror_pad then crop by the same amounts is the identity") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    ShellGrid g = random_grid({2, 3, 9, 11}, 100 + seed);
    const PadSpec pad{seed % 5, (seed * 3) % 8, (seed * 7) % 10, seed % 3};
    ShellGrid p = mirror_pad(g, pad);
    CHECK(p.lat() == 9 + pad.lat_before + pad.lat_after);
    CHECK(p.lon() == 11 + pad.lon_before + pad.lon_after);
    auto back = kernels::crop(p.values, {0, 0, pad.lat_before, pad.lon_before},
                              {2, 3, 9, 11});
    CHECK(bitwise_equal(back, g.values));
  }
}

TEST_CASE("block_downsample_latlon: shapes, constants, block mean") {
  ShellGrid g = constant_grid({1, 1, 112, 216}, 0.25f);
  ShellGrid d = block_downsample_latlon(g, 8);
  CHECK(d.values.shape() == Shape{1, 1, 14, 27});
  for (float v : d.values.values()) CHECK(v == 0.25f);

  Tensor<float> ramp({1, 1, 8, 8});
  for (std::size_t i = 0; i < 64; ++i) ramp[i] = float(i + 1);
  CHECK(block_downsample_latlon(make_grid(ramp), 8).values.item() == 32.5f);

  CHECK_THROWS_AS(block_downsample_latlon(constant_grid({1, 1, 108, 216}, 0), 8),
                  ValidationError);
}

TEST_CASE("block_downsample commutes with rotations by multiples of the factor") {
  ShellGrid g = random_grid({2, 2, 16, 48}, 9);
  for (long long k : {8LL, 16LL, -24LL, 40LL}) {
    auto a = block_downsample_latlon(rotate_lon(g, k), 8);
    auto b = rotate_lon(block_downsample_latlon(g, 8), k / 8);
    CHECK(bitwise_equal(a.values, b.values));
  }
}

TEST_CASE("pipeline shape chain: 180x360 -> 108x216 -> 112x216 -> 14x27") {
  ShellGrid raw = random_grid({4, 31, 180, 360}, 10);
  PrepareParams p;  // defaults
  ShellGrid hr = prepare_high_res(raw, observed_range(raw.values), p);
  CHECK(hr.values.shape() == Shape{4, 31, 108, 216});
  ShellGrid padded = mirror_pad(hr, {2, 2, 0, 0});
  CHECK(padded.values.shape() == Shape{4, 31, 112, 216});
  ShellGrid lr = prepare_low_res(hr, p);
  CHECK(lr.values.shape() == Shape{4, 30, 14, 27});
}

TEST_CASE("radial selection: equal spacing includes both ends") {
  CHECK(radial_indices(9, 3) == std::vector<std::size_t>{0, 4, 8});
  std::vector<std::size_t> all(12);
  for (std::size_t i = 0; i < 12; ++i) all[i] = i;
  CHECK(radial_indices(12, 12) == all);

  // round(linspace(0, 200, 30)), evaluated by hand; no ties occur.
  const std::vector<std::size_t> expect = {
      0,   7,   14,  21,  28,  34,  41,  48,  55,  62,  69,  76,  83,  90,  97,
      103, 110, 117, 124, 131, 138, 145, 152, 159, 166, 172, 179, 186, 193, 200};
  const auto idx = radial_indices(201, 30);
  CHECK(idx == expect);
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());

  CHECK_THROWS_AS(radial_indices(9, 10), ValidationError);
  CHECK_THROWS_AS(radial_indices(9, 1), ValidationError);

  ShellGrid g = random_grid({2, 9, 3, 4}, 11);
  ShellGrid s = select_radial(g, 3);
  CHECK(s.values.at(1, 1, 2, 3) == g.values.at(1, 4, 2, 3));
}

TEST_CASE("rotate_lon: circular shift, full turn, composition, multisets") {
  Tensor<float> row({1, 1, 1, 4}, std::vector<float>{1, 2, 3, 4});
  CHECK(roll_lon(row, 1).storage() == std::vector<float>{4, 1, 2, 3});
  CHECK(roll_lon(row, -1).storage() == std::vector<float>{2, 3, 4, 1});

  ShellGrid g = random_grid({4, 3, 5, 17}, 12);
  CHECK(bitwise_equal(rotate_lon(g, 17).values, g.values));
  CHECK(bitwise_equal(rotate_lon(g, -34).values, g.values));
  for (long long a : {0LL, 3LL, 16LL, -5LL, 40LL}) {
    for (long long b : {1LL, 9LL, -20LL}) {
      const long long w = 17;
      const long long ab = ((a + b) % w + w) % w;
      CHECK(bitwise_equal(rotate_lon(rotate_lon(g, a), b).values,
                          rotate_lon(g, ab).values));
    }
    ShellGrid r = rotate_lon(g, a);
    for (std::size_t v = 0; v < 4; ++v) {
      CHECK(sorted_values(r.values, v) == sorted_values(g.values, v));
    }
  }
}

TEST_CASE("extract_pair: full-scale shapes and constant fields") {
  ShellGrid hr = constant_grid({4, 201, 108, 216}, 0.3f);
  ShellGrid lr = constant_grid({4, 30, 14, 27}, 0.6f);
  lr.stats = hr.stats;
  const PairGeometry geo = pair_geometry(hr.values.shape(), lr.values.shape(), {});
  CHECK(geo.input == Shape{4, 30, 20, 10});
  CHECK(geo.target == Shape{4, 198, 118, 38});
  CHECK(geo.hr_lat_pad == 5);
  CHECK(geo.hr_radial_start == 1);

  TrainingPair p = extract_pair(hr, lr, 5, geo);
  CHECK(p.input.shape() == Shape{4, 30, 20, 10});
  CHECK(p.target.shape() == Shape{4, 198, 118, 38});
  for (float v : p.input.values()) REQUIRE(v == 0.6f);
  for (float v : p.target.values()) REQUIRE(v == 0.3f);
  CHECK(p.hr_lon_start == 8 * 5 + 21);
}

TEST_CASE("extract_pair: target footprint is centred with a 21-column margin") {
  // 10 low-res columns span 80 high-res columns; (80 - 38) / 2 = 21.
  CHECK((8 * 10 - 38) / 2 == 21);
  ShellGrid hr = column_grid({1, 201, 108, 216});
  ShellGrid lr = column_grid({1, 30, 14, 27});
  lr.stats = hr.stats;
  const PairGeometry geo = pair_geometry(hr.values.shape(), lr.values.shape(), {});
  for (long long start : {0LL, 7LL, 24LL, 26LL}) {
    TrainingPair p = extract_pair(hr, lr, start, geo);
    for (std::size_t k = 0; k < 38; ++k) {
      const float expect = float((8 * start + 21 + static_cast<long long>(k)) % 216);
      REQUIRE(p.target.at(0, 0, 0, k) == expect);
    }
    for (std::size_t k = 0; k < 10; ++k) {
      REQUIRE(p.input.at(0, 0, 0, k) == float((start + static_cast<long long>(k)) % 27));
    }
  }
}

TEST_CASE("extract_pair: latitude and radial provenance") {
  ShellGrid hr = random_grid({1, 201, 108, 216}, 13);
  ShellGrid lr = random_grid({1, 30, 14, 27}, 14);
  lr.stats = hr.stats;
  lr.timestep = hr.timestep;
  const PairGeometry geo = pair_geometry(hr.values.shape(), lr.values.shape(), {});
  TrainingPair p = extract_pair(hr, lr, 0, geo);
  // Target row 5 is high-res row 0; row 4 mirrors row 1.
  CHECK(p.target.at(0, 0, 5, 0) == hr.values.at(0, 1, 0, 21));
  CHECK(p.target.at(0, 0, 4, 0) == hr.values.at(0, 1, 1, 21));
  // Row 117 is padded row 112, which reflects about row 107 onto row 102.
  CHECK(p.target.at(0, 197, 117, 37) == hr.values.at(0, 198, 102, 58));
  // Input row 3 is low-res row 0; row 0 mirrors row 3.
  CHECK(p.input.at(0, 2, 3, 4) == lr.values.at(0, 2, 0, 4));
  CHECK(p.input.at(0, 2, 0, 4) == lr.values.at(0, 2, 3, 4));

  ShellGrid other = lr;
  other.timestep = hr.timestep + 1;
  CHECK_THROWS_AS(extract_pair(hr, other, 0, geo), ValidationError);
  other = lr;
  other.stats[0].max = 2.0f;
  CHECK_THROWS_AS(extract_pair(hr, other, 0, geo), ValidationError);
}

TEST_CASE("rotating both grids then extracting equals extracting a shifted window") {
  ShellGrid hr = random_grid({2, 57, 22, 64}, 15);
  ShellGrid lr = random_grid({2, 8, 4, 8}, 16);
  lr.stats = hr.stats;
  lr.timestep = hr.timestep;
  PrepareParams micro{1.0, 8, 5, 8, 2, 8};
  const PairGeometry geo = pair_geometry(hr.values.shape(), lr.values.shape(), micro);
  for (long long k : {1LL, 3LL, -2LL, 11LL}) {
    for (long long start : {0LL, 5LL}) {
      TrainingPair a = extract_pair(rotate_lon(hr, 8 * k), rotate_lon(lr, k), start, geo);
      TrainingPair b = extract_pair(hr, lr, start - k, geo);
      CHECK(bitwise_equal(a.input, b.input));
      CHECK(bitwise_equal(a.target, b.target));
    }
  }
}

TEST_CASE("pair geometry obeys m = 8n - 42 on every axis") {
  struct Case {
    Shape hr, lr;
    PrepareParams p;
  };
  const Case cases[] = {
      {{4, 201, 108, 216}, {4, 30, 14, 27}, {}},
      {{4, 57, 22, 64}, {4, 8, 4, 8}, {1.0, 8, 5, 8, 2, 8}},
      {{1, 40, 30, 96}, {1, 7, 4, 12}, {1.0, 8, 1, 7, 3, 7}},
      {{2, 100, 46, 160}, {2, 12, 6, 20}, {1.0, 8, 1, 12, 4, 12}},
  };
  for (const auto& c : cases) {
    const PairGeometry g = pair_geometry(c.hr, c.lr, c.p);
    for (std::size_t a = 1; a < 4; ++a) {
      CHECK(g.target[a] == 8 * g.input[a] - 42);
    }
    CHECK(g.target[2] == g.hr_lat + 2 * g.hr_lat_pad);
  }
  // Downsample other than 8 cannot align with the generator.
  CHECK_THROWS_AS(pair_geometry({4, 57, 22, 64}, {4, 8, 4, 8}, {1.0, 4, 5, 8, 2, 8}),
                  ValidationError);
  // Input window narrower than the minimum extent.
  CHECK_THROWS_AS(pair_geometry({4, 57, 22, 64}, {4, 8, 4, 8}, {1.0, 8, 5, 8, 2, 6}),
                  ValidationError);
}

TEST_CASE("synth_shell: deterministic, radial-only without plumes, normalisable") {
  SynthDims dims{4, 9, 12, 24};
  ShellGrid a = synth_shell(77, dims, 5, 2);
  ShellGrid b = synth_shell(77, dims, 5, 2);
  CHECK(bitwise_equal(a.values, b.values));
  CHECK_FALSE(bitwise_equal(a.values, synth_shell(78, dims, 5, 2).values));
  CHECK_FALSE(bitwise_equal(a.values, synth_shell(77, dims, 5, 3).values));

  ShellGrid flat = synth_shell(77, dims, 0);
  for (std::size_t r = 0; r < dims.radial; ++r) {
    const float first = flat.values.at(0, r, 0, 0);
    for (std::size_t i = 0; i < dims.lat; ++i)
      for (std::size_t j = 0; j < dims.lon; ++j) {
        REQUIRE(flat.values.at(0, r, i, j) == first);
      }
  }
  CHECK(flat.values.at(0, 0, 0, 0) > flat.values.at(0, 8, 0, 0));

  auto [n, stats] = minmax_normalize(a);
  for (float v : n.values.values()) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  for (const auto& r : stats) CHECK_FALSE(r.degenerate());
}

TEST_CASE("prepare_dataset: shared stats, prepared shapes, manifest round trip") {
  test::TempDir dir("prep");
  Manifest raw;
  raw.dir = dir.path();
  raw.prepare = {1.0, 8, 5, 8, 2, 8};
  for (std::uint64_t t : {0u, 1u}) {
    const std::string name = "raw_" + std::to_string(t) + ".egv";
    save_volume(synth_shell(5, {4, 57, 22, 64}, 4, t), dir / name);
    raw.volumes.push_back({name, t});
  }
  Manifest m = prepare_dataset(raw, dir / "prepared");
  REQUIRE(m.stats);
  CHECK(m.prepared.size() == 2);
  CHECK(m.variables == default_variables(4));

  const Manifest reread = load_manifest(dir / "prepared" / "manifest.json");
  CHECK(reread.stats == m.stats);
  CHECK(reread.prepare == m.prepare);
  CHECK(reread.prepared.size() == 2);
  CHECK(reread.volumes[1].timestep == 1);
  validate_manifest(reread);

  // The shared stats cover both timesteps.
  const auto s0 = observed_range(load_volume(dir / "raw_0.egv").values);
  const auto s1 = observed_range(load_volume(dir / "raw_1.egv").values);
  CHECK(*m.stats == merge_ranges(s0, s1));

  PreparedSample s = load_prepared(reread, 1);
  CHECK(s.hr.values.shape() == Shape{4, 57, 22, 64});
  CHECK(s.lr.values.shape() == Shape{4, 8, 4, 8});
  CHECK(s.hr.timestep == 1);
  for (float v : s.hr.values.values()) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  const PairGeometry geo = manifest_geometry(reread);
  CHECK(geo.input == Shape{4, 8, 8, 8});
  CHECK(geo.target == Shape{4, 22, 22, 22});
  CHECK(find_timestep(reread, 1) == 1u);
  CHECK_FALSE(find_timestep(reread, 7).has_value());

  std::filesystem::remove(dir / "prepared" / "lr_0.egv");
  CHECK_THROWS_AS(validate_manifest(reread), ValidationError);
  CHECK_THROWS_AS(parse_manifest("{not json", dir.path()), FormatError);
}
