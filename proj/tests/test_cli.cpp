#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include "doctest.h"
#include "earthgan/synth.hpp"
#include "earthgan/volume_io.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace earthgan;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

// Runs the CLI with stdout captured and stderr redirected to a file.
Run cli(const test::TempDir& dir, const std::string& args) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(EARTHGAN_CLI) + " " + args + " 2>" + err.string();
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err);
  r.err.assign(std::istreambuf_iterator<char>(in), {});
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("synth then inspect reports the requested dims") {
  test::TempDir dir("cli");
  const Run s = cli(dir, "synth --seed 2 --dims 4,6,12,24 --timestep 9 --out " + q(dir / "a.egv"));
  REQUIRE(s.code == 0);
  const Run i = cli(dir, "inspect --file " + q(dir / "a.egv"));
  REQUIRE(i.code == 0);
  const json j = json::parse(i.out);
  CHECK(j["format"] == "EGV1");
  CHECK(j["dims"] == json::array({4, 6, 12, 24}));
  CHECK(j["timestep"] == 9);
  CHECK(j["stats"].size() == 4);
}

TEST_CASE("error kinds map to exit codes with a one-line reason") {
  test::TempDir dir("cli");
  Run r = cli(dir, "");
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: usage:", 0) == 0);

  r = cli(dir, "synth --seed 1 --dims 4,6,x --out " + q(dir / "b.egv"));
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: validation:", 0) == 0);

  write(dir / "junk.bin", "NOPE1234");
  r = cli(dir, "inspect --file " + q(dir / "junk.bin"));
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: format:", 0) == 0);

  r = cli(dir, "inspect --file " + q(dir / "missing.egv"));
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error: io:", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("prepare, train, infer and stitch from the command line") {
  test::TempDir dir("cli");
  for (int t : {0, 5}) {
    REQUIRE(cli(dir, "synth --seed " + std::to_string(t + 1) + " --dims 4,24,108,216 --timestep " +
                         std::to_string(t) + " --out " + q(dir / ("raw" + std::to_string(t) + ".egv")))
                .code == 0);
  }
  write(dir / "raw.json", R"({"volumes":[{"path":"raw0.egv","timestep":0},{"path":"raw5.egv","timestep":5}],
    "prepare":{"scale_ratio":1.0,"downsample":8,"lat_pad":2,"radial_lr":8,"input_lat_pad":3,"window_lon":10}})");
  write(dir / "cfg.json", R"({"generator":{"channel_cap":8},"critic":{"channels":[8,16,32]},
    "train":{"max_steps":1,"checkpoint_every":1,"seed":3}})");
  REQUIRE(cli(dir, "prepare --manifest " + q(dir / "raw.json") + " --out " + q(dir / "prep")).code == 0);
  const fs::path manifest = dir / "prep" / "manifest.json";

  Run r = cli(dir, "train --manifest " + q(manifest) + " --config " + q(dir / "cfg.json") +
                       " --out " + q(dir / "run"));
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["step"] == 1);
  const fs::path ckpt = dir / "run" / "ckpt_000001.egw";
  REQUIRE(fs::exists(ckpt));

  SUBCASE("resume picks up the latest checkpoint") {
    write(dir / "cfg.json", R"({"generator":{"channel_cap":8},"critic":{"channels":[8,16,32]},
      "train":{"max_steps":2,"checkpoint_every":1,"seed":3}})");
    r = cli(dir, "train --resume --manifest " + q(manifest) + " --config " + q(dir / "cfg.json") +
                     " --out " + q(dir / "run"));
    REQUIRE(r.code == 0);
    const json j = json::parse(r.out);
    CHECK(j["step"] == 2);
    CHECK(fs::path(j["resumed_from"].get<std::string>()).filename() == "ckpt_000001.egw");
  }

  SUBCASE("infer writes one wedge") {
    r = cli(dir, "infer --ckpt " + q(ckpt) + " --volume " + q(dir / "prep" / "lr_0.egv") +
                     " --lon-start 26 --noise seed:4 --out " + q(dir / "w.egv"));
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["hr_lon_start"] == (8 * 26 + 21) % 216);
    CHECK(grid::read_volume_header(dir / "w.egv").shape() == Shape{4, 22, 118, 38});
  }

  SUBCASE("stitch rejects a stride that does not divide the columns") {
    r = cli(dir, "stitch --ckpt " + q(ckpt) + " --volume " + q(dir / "prep" / "lr_0.egv") +
                     " --stride 4 --out " + q(dir / "s.egv"));
    CHECK(r.code == 2);
    CHECK(r.err.find("stride 4 does not divide 27") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "s.egv"));
  }

  SUBCASE("stitch writes the shell, seam report and plan") {
    r = cli(dir, "stitch --ckpt " + q(ckpt) + " --volume " + q(dir / "prep" / "lr_0.egv") +
                     " --stride 3 --blend average --workers 2 --out " + q(dir / "s.egv"));
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["wedges"] == 9);
    CHECK(grid::read_volume_header(dir / "s.egv").shape() == Shape{4, 22, 108, 216});
    std::ifstream plan(dir / "s.egv.plan.json");
    CHECK(json::parse(plan)["blend"] == "average");
    std::ifstream seams(dir / "s.egv.seams.json");
    CHECK(json::parse(seams).contains("ratio"));
  }

  SUBCASE("unknown blend is a validation error") {
    r = cli(dir, "stitch --ckpt " + q(ckpt) + " --volume " + q(dir / "prep" / "lr_0.egv") +
                     " --blend smooth --out " + q(dir / "s.egv"));
    CHECK(r.code == 2);
  }
}
