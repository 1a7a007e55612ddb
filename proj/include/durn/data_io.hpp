#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "durn/tensor.hpp"

namespace durn {

/// 8-bit interleaved (row-major, channel-last) image.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> samples;

  void validate() const;
  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

/// Reads PNG or binary PGM/PPM, chosen by the file signature.
ImageBuffer load_image(const std::filesystem::path& path);
/// Writes PNG for ".png", binary PGM/PPM for ".pgm", ".ppm" or ".pnm".
void save_image(const ImageBuffer& image, const std::filesystem::path& path);
bool is_image_path(const std::filesystem::path& path);

/// (1, C, H, W) tensor with values v / 255.
Tensor image_to_tensor(const ImageBuffer& image, DType dtype = DType::f32);
/// Takes the first batch item of an NCHW tensor (or a CHW / HW tensor),
/// clamps to [0, 1] and rounds to 8 bits.
ImageBuffer tensor_to_image(const Tensor& t);

/// Deterministic test pattern: a smooth gradient with a few soft-edged
/// discs and bars, samples kept within [0.1, 0.9].
ImageBuffer synthetic_image(int width, int height, int channels, std::uint64_t seed);

/// Adds i.i.d. N(0, (sigma_8bit / 255)^2) noise. Unclamped unless `clamp`.
Tensor add_gaussian_noise(const Tensor& image, double sigma_8bit, std::uint64_t seed,
                          bool clamp = false);

struct ImagePair {
  Tensor degraded;  // (1, C, H, W)
  Tensor clean;
  std::string name;
};

struct PatchOffset {
  std::int64_t y = 0;
  std::int64_t x = 0;
  friend bool operator==(const PatchOffset&, const PatchOffset&) = default;
};

/// Uniform crop offsets for a `size` x `size` window inside h x w.
std::vector<PatchOffset> patch_offsets(std::int64_t h, std::int64_t w, std::int64_t size, int count,
                                       std::uint64_t seed);
/// Aligned crops of both images at identical offsets.
std::vector<std::pair<Tensor, Tensor>> sample_patches(const ImagePair& pair, std::int64_t size,
                                                      int count, std::uint64_t seed);
/// (N, C, H, W) crop of an NCHW tensor.
Tensor crop(const Tensor& image, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w);
/// Concatenates (1, C, H, W) tensors along the batch axis.
Tensor stack_batch(const std::vector<Tensor>& items);

struct ManifestRecord {
  /// Empty when the degraded image is synthesised (written as "-").
  std::filesystem::path degraded;
  std::filesystem::path clean;
  std::string tags;
  int line = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::string task;
  std::vector<ManifestRecord> records;
};

/// Tab-separated "degraded<TAB>clean[<TAB>tags]" lines, '#' comments and an
/// optional "# task: <name>" directive. Relative paths resolve against the
/// manifest's directory. Every referenced file must exist.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Loads every pair. Records with a synthesised degraded image need
/// `noise_sigma`; noise is then drawn per record from `seed`.
std::vector<ImagePair> load_dataset(const DatasetManifest& manifest,
                                    std::optional<double> noise_sigma = std::nullopt,
                                    std::uint64_t seed = 0);

}  // namespace durn
