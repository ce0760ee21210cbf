#ifndef MSVAE_LATENTIO_HPP_
#define MSVAE_LATENTIO_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "msvae/cascade.hpp"
#include "msvae/matrix.hpp"
#include "msvae/vae.hpp"

namespace msvae {

// Latent dump layout (all integers little-endian):
//
//   offset  size  field
//        0     4  magic "MSVL"
//        4     4  version (u32, = 1)
//        8     4  stage_index (u32)
//       12     8  rows (u64)
//       20     8  cols (u64)
//       28     1  encode_mode (u8: 0 posterior_sample, 1 posterior_mean)
//       29     8  source seed (u64)
//       37     -  rows * cols float32, row-major
inline constexpr char kLatentMagic[4] = {'M', 'S', 'V', 'L'};
inline constexpr std::uint32_t kLatentVersion = 1;
inline constexpr std::size_t kLatentHeaderBytes = 37;

inline constexpr char kWeightsMagic[4] = {'M', 'S', 'V', 'W'};
inline constexpr int kCheckpointVersion = 1;
inline constexpr int kStackVersion = 1;

/// Writes `bytes` to a temporary sibling, fsyncs it and renames it over
/// `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

/// Throws FormatError(kOverflow) if any value is non-finite or outside the
/// 32-bit float range.
void write_latents(const std::filesystem::path& path,
                   const LatentDataset& latents);
std::string encode_latents(const LatentDataset& latents);

LatentDataset read_latents(const std::filesystem::path& path);
LatentDataset decode_latents(std::string_view bytes);

/// Checkpoint = JSON manifest + weights blob ("MSVW" then float64 tensors).
/// The manifest names the blob relative to its own directory.
void save_checkpoint(const std::filesystem::path& manifest_path,
                     const GaussianVae& vae,
                     const nlohmann::json& metadata = nlohmann::json::object());
GaussianVae load_checkpoint(const std::filesystem::path& manifest_path,
                            nlohmann::json* metadata = nullptr);

/// Directory with stack.json plus stage_<k>.json / stage_<k>.bin per stage.
void save_stack(const std::filesystem::path& dir, const StageStack& stack,
                const nlohmann::json& metadata = nlohmann::json::object());
StageStack load_stack(const std::filesystem::path& dir,
                      nlohmann::json* metadata = nullptr);
bool is_stack_dir(const std::filesystem::path& dir);

/// Comma-separated values, '.' decimal separator, shortest round-trip
/// formatting. The header row holds column names (default x0, x1, ...).
void csv_export(const std::filesystem::path& path, const Matrix& m,
                bool header = true,
                std::span<const std::string> column_names = {});
std::string csv_format(const Matrix& m, bool header = true,
                       std::span<const std::string> column_names = {});

/// `has_header` unset means: treat the first line as a header when its first
/// field is not a number. A header-only file yields a 0-row matrix of the
/// header's width.
Matrix csv_import(const std::filesystem::path& path,
                  std::optional<bool> has_header = std::nullopt);
Matrix csv_parse(std::string_view text,
                 std::optional<bool> has_header = std::nullopt);

}  // namespace msvae

#endif  // MSVAE_LATENTIO_HPP_
