// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shufflenas/rng.hpp"
#include "shufflenas/tensor.hpp"

namespace shufflenas {

enum class Split { train, val, test };
std::string_view split_name(Split split);

/// Images stored as unsigned bytes, height x width x channel (RGB).
struct Dataset {
  std::int64_t height = 32;
  std::int64_t width = 32;
  std::int64_t channels = 3;
  int num_classes = 10;
  Split split = Split::train;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  std::int64_t image_bytes() const { return height * width * channels; }
  std::span<const std::uint8_t> image(std::int64_t index) const;
  /// Copies the listed records into a new dataset with the given split tag.
  Dataset subset(std::span<const std::int64_t> indices, Split tag) const;
};

inline constexpr std::int64_t kCifarRecordBytes = 3073;
inline constexpr std::int64_t kCifarRecordsPerFile = 10000;
inline constexpr std::int64_t kCifarFileBytes = kCifarRecordBytes * kCifarRecordsPerFile;
inline constexpr std::int64_t kValidationSize = 5000;

/// Decodes CIFAR-10 binary records (label byte, then 1024 red, 1024 green,
/// 1024 blue bytes). Throws on a partial record or a label above 9.
Dataset decode_cifar10_records(std::span<const std::uint8_t> bytes, Split tag);
/// Reads one batch file; its size must be exactly 30,730,000 bytes.
Dataset read_cifar10_file(const std::filesystem::path& path, Split tag);

struct Cifar10 {
  Dataset train;  // 45000
  Dataset val;    // last 5000 training records in file order
  Dataset test;   // 10000
};

/// Expects data_batch_1.bin .. data_batch_5.bin and test_batch.bin.
Cifar10 load_cifar10(const std::filesystem::path& directory);

/// Per-channel mean and standard deviation in [0, 1] pixel scale.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalizer fit(const Dataset& data);
  /// Image as channel x height x width floating values.
  std::vector<double> apply(std::span<const std::uint8_t> image, std::int64_t height,
                            std::int64_t width) const;
};

std::array<double, 3> channel_means(const Dataset& data);

inline constexpr int kPadding = 4;
inline constexpr int kCutoutSize = 16;

struct AugmentParams {
  int crop_y = kPadding;  // offset into the zero-padded image, in [0, 2 * kPadding]
  int crop_x = kPadding;
  bool flip = false;
  std::optional<std::pair<int, int>> cutout_center;  // (y, x)
};

AugmentParams sample_augment(Rng& rng, std::int64_t height, std::int64_t width, bool cutout);

/// Pad by 4 with zeros, crop, optionally flip horizontally, then zero a
/// 16x16 square clipped at the borders. `image` is channel x height x width.
void apply_augment(std::span<double> image, std::int64_t channels, std::int64_t height,
                   std::int64_t width, const AugmentParams& params);

struct AugmentOptions {
  bool enabled = false;
  bool cutout = false;
};

struct Batch {
  Tensor images;  // [n, c, h, w]
  std::vector<int> labels;
};

Batch make_batch(const Dataset& data, std::span<const std::int64_t> indices,
                 const Normalizer& normalizer, DType dtype, const AugmentOptions& augment = {},
                 Rng* rng = nullptr);

enum class SyntheticKind { two_gaussians_images, striped_patterns };
std::string_view synthetic_kind_name(SyntheticKind kind);
SyntheticKind parse_synthetic_kind(std::string_view name);

/// two_gaussians_images: 2 classes, pixels drawn around one of two fixed
/// opposite templates. striped_patterns: 4 classes, horizontal or vertical
/// stripes with period 4 or 8, random phase and colour, plus noise. Labels
/// are balanced to within one and shuffled.
Dataset synthetic_dataset(SyntheticKind kind, std::int64_t n, Rng& rng, Split tag = Split::train);

}  // namespace shufflenas
