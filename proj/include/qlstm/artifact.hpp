#pragma once

// ROM initialization files and model manifests.
//
// Each parameter tensor and LUT is written as one word per line in upper-case
// two's-complement hex with ceil(y / 4) digits, LF terminated. Matrices are
// row-major: rows are output neurons, gate-matrix columns are [h | x].
// manifest.json lists the files with role, shape and SHA-256; its
// created_at field is excluded from content_sha256.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qlstm/fxp.hpp"
#include "qlstm/lstm.hpp"
#include "qlstm/quantizer.hpp"
#include "qlstm/training.hpp"

namespace qlstm::artifact {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr std::string_view kLayout = "row-major; gate matrix columns [h | x]";

/// Emission order; file names are "<role>.hex".
inline constexpr std::string_view kRoles[] = {"W_f", "b_f", "W_i", "b_i", "W_g", "b_g", "W_o",
                                              "b_o", "dense_W", "dense_b", "sigmoid_lut", "tanh_lut"};

struct FileEntry {
  std::string role;
  std::string file;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string sha256;

  friend bool operator==(const FileEntry&, const FileEntry&) = default;
};

struct LutInfo {
  int depth = 0;
  double input_lo = 0.0;
  double input_hi = 0.0;

  friend bool operator==(const LutInfo&, const LutInfo&) = default;
};

struct Manifest {
  model::ModelConfig config;
  fxp::Format format;
  LutInfo sigmoid_lut;
  LutInfo tanh_lut;
  std::optional<train::Normalization> normalization;
  std::vector<FileEntry> files;
  std::string tool_version{kToolVersion};
  std::string created_at;
  std::string content_sha256;

  [[nodiscard]] const FileEntry* find(std::string_view role) const noexcept;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// "FF00" for -1.0 in Q(8,16).
std::string hex_word(std::int32_t raw, fxp::Format format);

/// Inverse of hex_word; throws DataError on malformed or out-of-range text.
std::int32_t parse_hex_word(std::string_view text, fxp::Format format);

/// ROM text for a run of raw words: one hex word per line.
std::string rom_text(std::span<const std::int32_t> raw, fxp::Format format);

/// Writes rom_text to `path`. Throws DataError on I/O failure.
void emit_rom(std::span<const std::int32_t> raw, fxp::Format format, const std::filesystem::path& path);

/// UTC ISO-8601; honours SOURCE_DATE_EPOCH for reproducible builds.
std::string current_timestamp();

/// Writes the twelve ROM files and manifest.json into `dir` (created if
/// missing). On failure every file created by this call is removed.
Manifest emit_all(const quant::QuantizedModel& qm, const std::filesystem::path& dir,
                  const std::optional<train::Normalization>& normalization = std::nullopt,
                  const std::string& created_at = current_timestamp());

/// Hash over the manifest with created_at and content_sha256 removed.
std::string manifest_content_hash(const Manifest& manifest);

/// Stable key order, two-space indent, trailing LF.
std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(std::string_view text);

/// Parses manifest.json (path to the file or its directory).
Manifest read_manifest(const std::filesystem::path& path);

/// Reads and verifies every ROM file. Throws DataError on a missing role or
/// file, hash mismatch, shape mismatch or malformed hex.
quant::QuantizedModel load_manifest(const std::filesystem::path& path);

/// Full-precision model as written by `train`.
struct FloatModel {
  model::ModelConfig config;
  model::LstmParams params;
  train::Normalization normalization;
  std::uint64_t seed = 1;
};

std::string float_model_to_json(const FloatModel& fm);
void save_float_model(const FloatModel& fm, const std::filesystem::path& path);
FloatModel load_float_model(const std::filesystem::path& path);

}  // namespace qlstm::artifact
