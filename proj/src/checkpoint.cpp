#include "earthgan/checkpoint.hpp"

#include "earthgan/binary.hpp"
#include "earthgan/dataset.hpp"
#include "json.hpp"

namespace earthgan::model {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'E', 'G', 'W', '1'};
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxName = 4096;

json header_json(const Checkpoint& c) {
  json j;
  j["format"] = "EGW1";
  j["kind"] = c.kind;
  j["generator"] = json::parse(config_json(c.generator));
  j["critic"] = c.critic ? json::parse(config_json(*c.critic)) : json();
  j["fingerprint"] = c.fingerprint();
  j["step"] = c.step;
  if (c.stats) {
    json s = json::array();
    for (const auto& r : *c.stats) s.push_back({{"min", r.min}, {"max", r.max}});
    j["stats"] = s;
    j["stats_ref"] = grid::stats_reference(*c.stats);
  } else {
    j["stats"] = nullptr;
  }
  j["extra"] = json::parse(c.extra);
  j["records"] = c.params.size();
  return j;
}

struct Parsed {
  json header;
  std::vector<std::pair<RecordInfo, std::span<const std::uint8_t>>> records;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) {
    throw TruncatedError("EGW1: " + std::to_string(bytes.size()) +
                         " bytes is too short for a checkpoint");
  }
  if (std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) !=
      std::string_view(kMagic, 4)) {
    throw FormatError("EGW1: not a checkpoint (bad magic)");
  }
  const auto body = bytes.first(bytes.size() - 4);
  binary::Reader tail(bytes.last(4), "EGW1");
  const std::uint32_t stored = tail.u32();
  if (binary::crc32(body) != stored) {
    throw ChecksumError("EGW1: CRC32 mismatch, file is corrupt");
  }

  binary::Reader in(body, "EGW1");
  in.take(4);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("EGW1: unsupported version " + std::to_string(version));
  }
  Parsed out;
  const std::uint32_t header_len = in.u32();
  try {
    out.header = json::parse(in.text(header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("EGW1: bad header: ") + e.what());
  }
  while (in.remaining() > 0) {
    RecordInfo info;
    const std::uint32_t name_len = in.u32();
    if (name_len == 0 || name_len > kMaxName) {
      throw FormatError("EGW1: bad record name length " + std::to_string(name_len));
    }
    info.name = in.text(name_len);
    const std::uint32_t rank = in.u32();
    if (rank == 0 || rank > kMaxRank) {
      throw FormatError("EGW1: record '" + info.name + "' has rank " +
                        std::to_string(rank));
    }
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t e = in.u32();
      if (e == 0) throw FormatError("EGW1: record '" + info.name + "' has a zero extent");
      info.shape.push_back(e);
      count *= e;
      if (count > in.remaining()) {
        throw TruncatedError("EGW1: record '" + info.name + "' overruns the file");
      }
    }
    out.records.emplace_back(info, in.take(count * sizeof(float)));
  }
  return out;
}

void check_layout(const ParamStore<float>& got, const ParamStore<float>& want) {
  if (got.size() != want.size()) {
    throw FingerprintError("EGW1: " + std::to_string(got.size()) +
                           " parameters stored, architecture has " +
                           std::to_string(want.size()));
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    const auto& a = got.entries()[i];
    const auto& b = want.entries()[i];
    if (a.name != b.name || a.var.shape() != b.var.shape()) {
      throw FingerprintError("EGW1: parameter '" + a.name + "' " +
                             to_string(a.var.shape()) + " does not match architecture ('" +
                             b.name + "' " + to_string(b.var.shape()) + ")");
    }
  }
}

}  // namespace

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
  binary::Writer out;
  out.bytes(kMagic, 4);
  out.u32(kCheckpointVersion);
  const std::string header = header_json(c).dump();
  out.u32(static_cast<std::uint32_t>(header.size()));
  out.text(header);
  for (const auto& p : c.params.entries()) {
    out.u32(static_cast<std::uint32_t>(p.name.size()));
    out.text(p.name);
    const Shape& s = p.var.shape();
    out.u32(static_cast<std::uint32_t>(s.size()));
    for (std::size_t e : s) out.u32(static_cast<std::uint32_t>(e));
    out.f32s(p.var.value().values());
  }
  out.u32(binary::crc32(out.buffer()));
  return std::move(out.buffer());
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes,
                       const std::optional<std::string>& expected_fingerprint) {
  Parsed parsed = parse(bytes);
  const json& h = parsed.header;
  Checkpoint c;
  try {
    c.kind = h.at("kind").get<std::string>();
    c.generator = generator_config_from_json(h.at("generator").dump());
    if (!h.at("critic").is_null()) c.critic = critic_config_from_json(h.at("critic").dump());
    c.step = h.at("step").get<std::uint64_t>();
    if (h.contains("stats") && !h.at("stats").is_null()) {
      grid::Stats s;
      for (const auto& r : h.at("stats")) {
        s.push_back({r.at("min").get<float>(), r.at("max").get<float>()});
      }
      c.stats = std::move(s);
    }
    c.extra = h.value("extra", json::object()).dump();
    const std::string stored = h.at("fingerprint").get<std::string>();
    if (stored != c.fingerprint()) {
      throw FingerprintError("EGW1: stored fingerprint " + stored +
                             " does not match its own config (" + c.fingerprint() + ")");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("EGW1: bad header: ") + e.what());
  }
  if (expected_fingerprint && *expected_fingerprint != c.fingerprint()) {
    throw FingerprintError("EGW1: architecture fingerprint " + c.fingerprint() +
                           " does not match expected " + *expected_fingerprint);
  }
  for (auto& [info, payload] : parsed.records) {
    Tensor<float> t(info.shape);
    binary::Reader r(payload, "EGW1");
    r.f32s(t.values());
    c.params.add(info.name, std::move(t));
  }
  if (c.kind == "model") {
    ParamStore<float> want = build_generator<float>(c.generator, 0);
    if (c.critic) want.merge(build_critic<float>(*c.critic, 0));
    check_layout(c.params, want);
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  binary::write_file(path, serialize(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_fingerprint) {
  const auto bytes = binary::read_file(path);
  try {
    return deserialize(bytes, expected_fingerprint);
  } catch (const ChecksumError& e) {
    throw ChecksumError(path.string() + ": " + e.what());
  } catch (const TruncatedError& e) {
    throw TruncatedError(path.string() + ": " + e.what());
  }
}

CheckpointSummary inspect_checkpoint(const std::filesystem::path& path) {
  const auto bytes = binary::read_file(path);
  Parsed parsed = parse(bytes);
  CheckpointSummary s;
  s.header_json = parsed.header.dump(2);
  s.bytes = bytes.size();
  for (auto& [info, payload] : parsed.records) s.records.push_back(info);
  return s;
}

}  // namespace earthgan::model
