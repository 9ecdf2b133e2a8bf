#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "earthgan/grid.hpp"
#include "earthgan/models.hpp"

namespace earthgan::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Contents of one EGW1 container. `kind` is "model" for generator/critic
// weights and "optimizer-state" for the training sidecar; only model files
// have their parameter layout checked against the configs.
struct Checkpoint {
  std::string kind = "model";
  GeneratorConfig generator;
  std::optional<CriticConfig> critic;
  std::uint64_t step = 0;
  std::optional<grid::Stats> stats;
  std::string extra = "{}";  // free-form JSON object
  ParamStore<float> params;

  std::string fingerprint() const { return model::fingerprint(generator, critic); }
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
// CRC mismatch -> ChecksumError; short input -> TruncatedError; malformed
// header or records -> FormatError; architecture differing from
// `expected_fingerprint` (or from the stored parameter layout) ->
// FingerprintError.
Checkpoint deserialize(std::span<const std::uint8_t> bytes,
                       const std::optional<std::string>& expected_fingerprint = {});

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_fingerprint = {});

struct RecordInfo {
  std::string name;
  Shape shape;
};

// Header JSON and record table, without checking the layout.
struct CheckpointSummary {
  std::string header_json;
  std::vector<RecordInfo> records;
  std::size_t bytes = 0;
};
CheckpointSummary inspect_checkpoint(const std::filesystem::path& path);

}  // namespace earthgan::model
