// Command-line front end: data preparation, training, inference, stitching,
// the HTTP service and file inspection.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "earthgan/binary.hpp"
#include "earthgan/checkpoint.hpp"
#include "earthgan/dataset.hpp"
#include "earthgan/inference.hpp"
#include "earthgan/service.hpp"
#include "earthgan/synth.hpp"
#include "earthgan/training.hpp"
#include "earthgan/volume_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace earthgan;
using nlohmann::json;

namespace {

constexpr int kUsage = 1, kInvalid = 2, kRuntime = 3;

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int fail(const std::string& kind, const std::string& msg, int code) {
  std::cerr << "error: " << kind << ": " << one_line(msg) << std::endl;
  return code;
}

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw ValidationError("--dims expects V,R,H,W positive integers, got '" + text + "'");
    }
    out.push_back(std::stoull(part));
  }
  if (out.size() != 4 || std::find(out.begin(), out.end(), 0u) != out.end()) {
    throw ValidationError("--dims expects V,R,H,W positive integers, got '" + text + "'");
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  binary::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

json stats_json(const grid::Stats& stats) {
  json a = json::array();
  for (const auto& r : stats) a.push_back({{"min", r.min}, {"max", r.max}});
  return a;
}

int cmd_prepare(const fs::path& manifest, const fs::path& out) {
  const grid::Manifest m = grid::prepare_dataset(grid::load_manifest(manifest), out);
  std::cout << json{{"manifest", (out / "manifest.json").string()},
                    {"prepared", m.prepared.size()},
                    {"stats", stats_json(*m.stats)}}
                   .dump()
            << std::endl;
  return 0;
}

int cmd_synth(std::uint64_t seed, const std::string& dims_text, std::size_t plumes,
              std::uint64_t timestep, const fs::path& out) {
  const auto d = parse_dims(dims_text);
  const grid::ShellGrid g = grid::synth_shell(seed, {d[0], d[1], d[2], d[3]}, plumes, timestep);
  grid::save_volume(g, out);
  std::cout << json{{"file", out.string()}, {"dims", g.values.shape()}}.dump() << std::endl;
  return 0;
}

int cmd_train(const fs::path& manifest_path, const std::optional<fs::path>& config,
              const fs::path& out, bool resume, std::uint64_t init_seed) {
  const grid::Manifest m = grid::load_manifest(manifest_path);
  const train::RunConfig rc = config ? train::load_run_config(*config) : train::RunConfig{};
  std::optional<fs::path> from;
  if (resume) from = train::latest_checkpoint(out);
  train::Trainer trainer = from ? train::Trainer::resume(*from, rc.train)
                                : train::Trainer(rc.generator, rc.critic, rc.train, init_seed);
  trainer.run(m, out);
  const auto latest = train::latest_checkpoint(out);
  std::cout << json{{"step", trainer.state().step},
                    {"epoch", trainer.state().epoch},
                    {"checkpoint", latest ? latest->string() : ""},
                    {"resumed_from", from ? from->string() : ""}}
                   .dump()
            << std::endl;
  return 0;
}

infer::Model load(const fs::path& ckpt, const std::optional<fs::path>& manifest) {
  return infer::load_model(ckpt, manifest);
}

int cmd_infer(const fs::path& ckpt, const std::optional<fs::path>& manifest, const fs::path& volume,
              long long lon_start, const std::string& noise, const fs::path& out) {
  const infer::Model model = load(ckpt, manifest);
  const grid::ShellGrid lr = grid::load_volume(volume);
  const infer::Wedge w = infer::generate_wedge(model, lr, lon_start, infer::NoiseMode::parse(noise));
  grid::ShellGrid g;
  g.values = w.data;
  g.variables = lr.variables;
  g.stats = model.stats;
  g.timestep = w.timestep;
  grid::save_volume(g, out);
  std::cout << json{{"file", out.string()},
                    {"dims", w.data.shape()},
                    {"lon_start", w.lon_start_lr},
                    {"hr_lon_start", w.hr_lon_start},
                    {"hr_lat_pad", w.hr_lat_pad},
                    {"hr_radial_start", w.hr_radial_start}}
                   .dump()
            << std::endl;
  return 0;
}

int cmd_stitch(const fs::path& ckpt, const std::optional<fs::path>& manifest, const fs::path& volume,
               std::size_t stride, const std::string& blend_name, const std::string& noise,
               std::size_t workers, const fs::path& out) {
  const infer::Blend blend = infer::parse_blend(blend_name);
  const infer::NoiseMode mode = infer::NoiseMode::parse(noise);
  const infer::Model model = load(ckpt, manifest);
  const grid::ShellGrid lr = grid::load_volume(volume);
  const grid::PairGeometry geo = infer::model_geometry(model, lr.values.shape());
  const auto starts = infer::plan_wedges(geo.lr_lon, stride);
  const auto wedges = infer::generate_wedges(model, lr, starts, mode, workers);
  const grid::ShellGrid shell = infer::stitch(wedges, geo.hr_lon, blend, model.stats, lr.variables);
  infer::export_shell(shell, out);
  const infer::Layout layout = infer::layout_of(wedges, geo.hr_lon);
  const infer::SeamReport seams = infer::seam_metric(shell.values, infer::seam_columns(layout, blend));
  fs::path seam_path = out, plan_path = out;
  seam_path += ".seams.json";
  plan_path += ".plan.json";
  write_text(seam_path, seams.json());
  write_text(plan_path, infer::plan_json(layout, blend, wedges));
  std::cout << json{{"file", out.string()},
                    {"dims", shell.values.shape()},
                    {"wedges", wedges.size()},
                    {"seam_ratio", seams.ratio},
                    {"seams", seam_path.string()},
                    {"plan", plan_path.string()}}
                   .dump()
            << std::endl;
  return 0;
}

int cmd_slice(const fs::path& volume, std::size_t var, std::size_t radial, bool physical,
              const fs::path& out) {
  grid::ShellGrid g = grid::load_volume(volume);
  float lo = 0.0f, hi = 1.0f;
  if (physical) {
    g = grid::denormalize(g, g.stats);
    lo = g.stats.at(var).min;
    hi = g.stats.at(var).max;
  }
  const infer::SliceFiles f = infer::export_slice(g, var, radial, out, lo, hi);
  std::cout << json{{"raw", f.raw.string()}, {"image", f.image.string()}, {"sidecar", f.sidecar.string()}}
                   .dump()
            << std::endl;
  return 0;
}

service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const fs::path& config, const std::optional<std::string>& bind,
              const std::optional<int>& port) {
  service::ServerConfig cfg = service::ServerConfig::load(config);
  cfg.apply_env();
  if (bind) cfg.bind = *bind;
  if (port) cfg.port = *port;
  service::Service svc(cfg);
  service::HttpServer server(svc);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.run([&](int p) {
    std::cout << json{{"listening", cfg.bind + ":" + std::to_string(p)},
                      {"fingerprint", svc.model().fingerprint}}
                     .dump()
              << std::endl;
  });
  g_server = nullptr;
  return 0;
}

int cmd_inspect(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  char magic[4] = {};
  in.read(magic, 4);
  const std::string m(magic, static_cast<std::size_t>(in.gcount()));
  json out;
  if (m == "EGV1") {
    const grid::VolumeHeader h = grid::read_volume_header(file);
    out = {{"format", "EGV1"},
           {"version", h.version},
           {"dims", h.shape()},
           {"timestep", h.timestep},
           {"variables", h.variables},
           {"stats", stats_json(h.stats)},
           {"bytes", fs::file_size(file)}};
  } else if (m == "EGW1") {
    const model::CheckpointSummary s = model::inspect_checkpoint(file);
    json records = json::array();
    std::size_t values = 0;
    for (const auto& r : s.records) {
      std::size_t n = 1;
      for (std::size_t d : r.shape) n *= d;
      values += n;
      records.push_back({{"name", r.name}, {"shape", r.shape}});
    }
    out = {{"format", "EGW1"},
           {"header", json::parse(s.header_json)},
           {"records", records},
           {"parameters", values},
           {"bytes", s.bytes}};
  } else {
    throw FormatError(file.string() + ": unknown magic, expected EGV1 or EGW1");
  }
  std::cout << out.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EarthGAN surrogate toolkit: prepare mantle-convection volumes, train the\n"
               "conditional GAN, generate and stitch shells, and serve them over HTTP."};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 1 usage error, 2 format/validation error, 3 runtime failure.\n"
      "Errors print one line to stderr: 'error: <kind>: <message>'.\n"
      "serve honours EARTHGAN_BIND, EARTHGAN_PORT and EARTHGAN_WORKERS, which override\n"
      "the config file; --bind/--port override both.");

  fs::path manifest, out, config, ckpt, volume, file;
  std::optional<fs::path> opt_manifest, opt_config;
  std::uint64_t seed = 0, timestep = 0, init_seed = 0;
  std::string dims, noise = "zero", blend = "feather";
  std::size_t plumes = 6, stride = 3, workers = 1, var = 0, radial = 0;
  long long lon_start = 0;
  bool resume = false, physical = false;
  std::optional<std::string> bind;
  std::optional<int> port;

  auto* prepare = app.add_subcommand("prepare", "rescale, normalise, downsample and select radial layers");
  prepare->add_option("--manifest", manifest, "raw volume manifest")->required();
  prepare->add_option("--out", out, "output directory")->required();

  auto* synth = app.add_subcommand("synth", "write a synthetic plume shell as EGV1");
  synth->add_option("--seed", seed)->required();
  synth->add_option("--dims", dims, "V,R,H,W")->required();
  synth->add_option("--plumes", plumes, "number of plumes")->capture_default_str();
  synth->add_option("--timestep", timestep)->capture_default_str();
  synth->add_option("--out", out)->required();

  auto* train_cmd = app.add_subcommand("train", "train on a prepared manifest");
  train_cmd->add_option("--manifest", manifest)->required();
  train_cmd->add_option("--config", opt_config, "JSON with generator/critic/train objects");
  train_cmd->add_option("--out", out, "checkpoint and metrics directory")->required();
  train_cmd->add_flag("--resume", resume, "continue from the latest checkpoint in --out");
  train_cmd->add_option("--init-seed", init_seed, "weight initialisation seed")->capture_default_str();

  auto* infer_cmd = app.add_subcommand("infer", "generate one wedge");
  infer_cmd->add_option("--ckpt", ckpt)->required();
  infer_cmd->add_option("--volume", volume, "prepared low-res EGV1")->required();
  infer_cmd->add_option("--lon-start", lon_start, "low-res start column")->required();
  infer_cmd->add_option("--noise", noise, "zero | seed:N | avg:N")->capture_default_str();
  infer_cmd->add_option("--manifest", opt_manifest, "layout source for bare checkpoints");
  infer_cmd->add_option("--out", out)->required();

  auto* stitch_cmd = app.add_subcommand("stitch", "generate and stitch a full shell");
  stitch_cmd->add_option("--ckpt", ckpt)->required();
  stitch_cmd->add_option("--volume", volume, "prepared low-res EGV1")->required();
  stitch_cmd->add_option("--stride", stride, "low-res columns between wedges")->capture_default_str();
  stitch_cmd->add_option("--blend", blend, "feather | average | hard")->capture_default_str();
  stitch_cmd->add_option("--noise", noise, "zero | seed:N | avg:N")->capture_default_str();
  stitch_cmd->add_option("--workers", workers, "generation threads")->capture_default_str();
  stitch_cmd->add_option("--manifest", opt_manifest, "layout source for bare checkpoints");
  stitch_cmd->add_option("--out", out)->required();

  auto* slice_cmd = app.add_subcommand("slice", "export one radial layer as raw f32 + PGM + JSON");
  slice_cmd->add_option("--volume", volume)->required();
  slice_cmd->add_option("--var", var)->capture_default_str();
  slice_cmd->add_option("--radial", radial)->required();
  slice_cmd->add_flag("--physical", physical, "denormalise with the volume's stats first");
  slice_cmd->add_option("--out", out, "output prefix")->required();

  auto* serve = app.add_subcommand("serve", "start the HTTP service");
  serve->add_option("--config", config, "server JSON config")->required();
  serve->add_option("--bind", bind);
  serve->add_option("--port", port);

  auto* inspect = app.add_subcommand("inspect", "print header, shape and stats of an EGV1/EGW1 file");
  inspect->add_option("--file", file)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kUsage);
  }

  try {
    if (*prepare) return cmd_prepare(manifest, out);
    if (*synth) return cmd_synth(seed, dims, plumes, timestep, out);
    if (*train_cmd) return cmd_train(manifest, opt_config, out, resume, init_seed);
    if (*infer_cmd) return cmd_infer(ckpt, opt_manifest, volume, lon_start, noise, out);
    if (*stitch_cmd) return cmd_stitch(ckpt, opt_manifest, volume, stride, blend, noise, workers, out);
    if (*slice_cmd) return cmd_slice(volume, var, radial, physical, out);
    if (*serve) return cmd_serve(config, bind, port);
    if (*inspect) return cmd_inspect(file);
  } catch (const ValidationError& e) {
    return fail(e.kind(), e.what(), kInvalid);
  } catch (const FormatError& e) {
    return fail(e.kind(), e.what(), kInvalid);
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), kRuntime);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), kRuntime);
  }
  return fail("usage", "no command given", kUsage);
}
