// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>

namespace shufflenas {

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::span<const std::uint8_t> Dataset::image(std::int64_t index) const {
  if (index < 0 || index >= size())
    throw std::out_of_range("dataset index " + std::to_string(index) + " out of range");
  return std::span<const std::uint8_t>(pixels).subspan(
      static_cast<std::size_t>(index * image_bytes()), static_cast<std::size_t>(image_bytes()));
}

Dataset Dataset::subset(std::span<const std::int64_t> indices, Split tag) const {
  Dataset out = *this;
  out.split = tag;
  out.pixels.clear();
  out.labels.clear();
  out.pixels.reserve(indices.size() * static_cast<std::size_t>(image_bytes()));
  for (auto i : indices) {
    auto img = image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    out.labels.push_back(labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

Dataset decode_cifar10_records(std::span<const std::uint8_t> bytes, Split tag) {
  if (bytes.size() % kCifarRecordBytes != 0)
    throw std::invalid_argument("CIFAR-10 data of " + std::to_string(bytes.size()) +
                                " bytes is not a whole number of 3073-byte records");
  Dataset out;
  out.split = tag;
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  const std::size_t plane = 32 * 32;
  out.pixels.resize(records * plane * 3);
  out.labels.resize(records);
  for (std::size_t r = 0; r < records; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9)
      throw std::invalid_argument("CIFAR-10 record " + std::to_string(r) + " has label " +
                                  std::to_string(rec[0]) + " (> 9)");
    out.labels[r] = rec[0];
    std::uint8_t* dst = out.pixels.data() + r * plane * 3;
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < 3; ++c) dst[p * 3 + c] = rec[1 + c * plane + p];
  }
  return out;
}

Dataset read_cifar10_file(const std::filesystem::path& path, Split tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open CIFAR-10 file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (static_cast<std::int64_t>(bytes.size()) != kCifarFileBytes)
    throw std::invalid_argument("CIFAR-10 file '" + path.string() + "' has " +
                                std::to_string(bytes.size()) + " bytes, expected " +
                                std::to_string(kCifarFileBytes));
  return decode_cifar10_records(bytes, tag);
}

Cifar10 load_cifar10(const std::filesystem::path& directory) {
  if (!std::filesystem::is_directory(directory))
    throw std::runtime_error("CIFAR-10 directory '" + directory.string() + "' does not exist");
  Dataset all;
  for (int i = 1; i <= 5; ++i) {
    Dataset part =
        read_cifar10_file(directory / ("data_batch_" + std::to_string(i) + ".bin"), Split::train);
    all.pixels.insert(all.pixels.end(), part.pixels.begin(), part.pixels.end());
    all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
  }
  Cifar10 out;
  std::vector<std::int64_t> train_idx(static_cast<std::size_t>(all.size() - kValidationSize));
  std::vector<std::int64_t> val_idx(static_cast<std::size_t>(kValidationSize));
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::iota(val_idx.begin(), val_idx.end(), all.size() - kValidationSize);
  out.train = all.subset(train_idx, Split::train);
  out.val = all.subset(val_idx, Split::val);
  out.test = read_cifar10_file(directory / "test_batch.bin", Split::test);
  return out;
}

std::array<double, 3> channel_means(const Dataset& data) {
  if (data.channels != 3) throw std::invalid_argument("channel_means: expected RGB data");
  std::array<double, 3> sum{};
  for (std::size_t i = 0; i < data.pixels.size(); ++i) sum[i % 3] += data.pixels[i];
  const double count = static_cast<double>(data.pixels.size() / 3) * 255.0;
  for (auto& s : sum) s /= count;
  return sum;
}

Normalizer Normalizer::fit(const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("Normalizer::fit: empty dataset");
  const auto C = static_cast<std::size_t>(data.channels);
  std::vector<double> sum(C, 0.0), sq(C, 0.0);
  for (std::size_t i = 0; i < data.pixels.size(); ++i) {
    const double v = data.pixels[i] / 255.0;
    sum[i % C] += v;
    sq[i % C] += v * v;
  }
  const double n = static_cast<double>(data.pixels.size() / C);
  Normalizer out;
  for (std::size_t c = 0; c < C; ++c) {
    const double mean = sum[c] / n;
    const double var = std::max(sq[c] / n - mean * mean, 0.0);
    if (var <= 0) throw std::invalid_argument("Normalizer::fit: channel " + std::to_string(c) +
                                              " has zero standard deviation");
    out.mean.push_back(mean);
    out.stddev.push_back(std::sqrt(var));
  }
  return out;
}

std::vector<double> Normalizer::apply(std::span<const std::uint8_t> image, std::int64_t height,
                                      std::int64_t width) const {
  const auto C = mean.size();
  const auto plane = static_cast<std::size_t>(height * width);
  if (image.size() != plane * C)
    throw std::invalid_argument("Normalizer::apply: image size does not match");
  std::vector<double> out(image.size());
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < C; ++c)
      out[c * plane + p] = (image[p * C + c] / 255.0 - mean[c]) / stddev[c];
  return out;
}

AugmentParams sample_augment(Rng& rng, std::int64_t height, std::int64_t width, bool cutout) {
  AugmentParams p;
  p.crop_y = static_cast<int>(rng.uniform_int(2 * kPadding + 1));
  p.crop_x = static_cast<int>(rng.uniform_int(2 * kPadding + 1));
  p.flip = rng.bernoulli(0.5);
  if (cutout)
    p.cutout_center = std::pair{static_cast<int>(rng.uniform_int(height)),
                                static_cast<int>(rng.uniform_int(width))};
  return p;
}

void apply_augment(std::span<double> image, std::int64_t channels, std::int64_t height,
                   std::int64_t width, const AugmentParams& params) {
  if (static_cast<std::int64_t>(image.size()) != channels * height * width)
    throw std::invalid_argument("apply_augment: image size does not match shape");
  if (params.crop_y < 0 || params.crop_y > 2 * kPadding || params.crop_x < 0 ||
      params.crop_x > 2 * kPadding)
    throw std::invalid_argument("apply_augment: crop offset outside the padded image");
  std::vector<double> src(image.begin(), image.end());
  for (std::int64_t c = 0; c < channels; ++c) {
    const double* in = src.data() + c * height * width;
    double* out = image.data() + c * height * width;
    for (std::int64_t y = 0; y < height; ++y) {
      const std::int64_t sy = y + params.crop_y - kPadding;
      for (std::int64_t x = 0; x < width; ++x) {
        const std::int64_t ox = params.flip ? width - 1 - x : x;
        const std::int64_t sx = x + params.crop_x - kPadding;
        const bool inside = sy >= 0 && sy < height && sx >= 0 && sx < width;
        out[y * width + ox] = inside ? in[sy * width + sx] : 0.0;
      }
    }
  }
  if (params.cutout_center) {
    const auto [cy, cx] = *params.cutout_center;
    const std::int64_t y0 = std::max<std::int64_t>(cy - kCutoutSize / 2, 0);
    const std::int64_t y1 = std::min<std::int64_t>(cy + kCutoutSize / 2, height);
    const std::int64_t x0 = std::max<std::int64_t>(cx - kCutoutSize / 2, 0);
    const std::int64_t x1 = std::min<std::int64_t>(cx + kCutoutSize / 2, width);
    for (std::int64_t c = 0; c < channels; ++c)
      for (std::int64_t y = y0; y < y1; ++y)
        for (std::int64_t x = x0; x < x1; ++x) image[static_cast<std::size_t>((c * height + y) * width + x)] = 0.0;
  }
}

Batch make_batch(const Dataset& data, std::span<const std::int64_t> indices,
                 const Normalizer& normalizer, DType dtype, const AugmentOptions& augment,
                 Rng* rng) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  if (augment.enabled && !rng) throw std::invalid_argument("make_batch: augmentation needs an rng");
  const std::int64_t n = static_cast<std::int64_t>(indices.size());
  const std::int64_t C = data.channels, H = data.height, W = data.width;
  Batch batch;
  batch.images = Tensor::zeros({n, C, H, W}, dtype);
  visit_dtype(dtype, [&](auto zero) {
    using T = decltype(zero);
    auto out = batch.images.data<T>();
    for (std::int64_t i = 0; i < n; ++i) {
      auto img = normalizer.apply(data.image(indices[static_cast<std::size_t>(i)]), H, W);
      if (augment.enabled) apply_augment(img, C, H, W, sample_augment(*rng, H, W, augment.cutout));
      std::transform(img.begin(), img.end(), out.begin() + i * C * H * W,
                     [](double v) { return static_cast<T>(v); });
    }
  });
  for (auto i : indices) batch.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
  return batch;
}

std::string_view synthetic_kind_name(SyntheticKind kind) {
  return kind == SyntheticKind::two_gaussians_images ? "two_gaussians_images" : "striped_patterns";
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "two_gaussians_images") return SyntheticKind::two_gaussians_images;
  if (name == "striped_patterns") return SyntheticKind::striped_patterns;
  throw std::invalid_argument("unknown synthetic dataset '" + std::string(name) +
                              "' (expected two_gaussians_images or striped_patterns)");
}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

Dataset synthetic_dataset(SyntheticKind kind, std::int64_t n, Rng& rng, Split tag) {
  if (n <= 0) throw std::invalid_argument("synthetic_dataset: n must be positive");
  Dataset out;
  out.split = tag;
  out.num_classes = kind == SyntheticKind::two_gaussians_images ? 2 : 4;
  const std::int64_t H = out.height, W = out.width, C = out.channels;

  // Balanced labels in random order.
  out.labels.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out.labels[static_cast<std::size_t>(i)] = static_cast<int>(i % out.num_classes);
  for (std::int64_t i = n - 1; i > 0; --i)
    std::swap(out.labels[static_cast<std::size_t>(i)],
              out.labels[static_cast<std::size_t>(rng.uniform_int(i + 1))]);

  out.pixels.resize(static_cast<std::size_t>(n * out.image_bytes()));
  if (kind == SyntheticKind::two_gaussians_images) {
    // Fixed template shared by every call, so separately generated splits
    // describe the same task.
    Rng template_rng(derive_seed(0x7a11u, "two_gaussians_images"));
    std::vector<double> pattern(static_cast<std::size_t>(out.image_bytes()));
    for (auto& p : pattern) p = template_rng.bernoulli(0.5) ? 1.0 : -1.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double sign = out.labels[static_cast<std::size_t>(i)] == 0 ? 1.0 : -1.0;
      for (std::int64_t k = 0; k < out.image_bytes(); ++k)
        out.pixels[static_cast<std::size_t>(i * out.image_bytes() + k)] =
            to_byte(128.0 + sign * 24.0 * pattern[static_cast<std::size_t>(k)] + 40.0 * rng.normal());
    }
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      const int label = out.labels[static_cast<std::size_t>(i)];
      const bool vertical = label % 2 == 1;
      const int period = label < 2 ? 4 : 8;
      const auto phase = rng.uniform_int(period);
      double color[3];
      for (double& c : color) c = rng.uniform(60.0, 120.0);
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t x = 0; x < W; ++x) {
          const std::int64_t coord = (vertical ? x : y) + phase;
          const double on = (coord % period) < period / 2 ? 1.0 : -1.0;
          for (std::int64_t c = 0; c < C; ++c)
            out.pixels[static_cast<std::size_t>(i * out.image_bytes() + (y * W + x) * C + c)] =
                to_byte(128.0 + on * color[c] * 0.5 + 20.0 * rng.normal());
        }
    }
  }
  return out;
}

}  // namespace shufflenas
