// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "shufflenas/data.hpp"
#include "shufflenas/ops.hpp"
#include "shufflenas/optim.hpp"
#include "shufflenas/tape.hpp"

using namespace shufflenas;
namespace fs = std::filesystem;

namespace {

// One record: label, then 1024 red, 1024 green, 1024 blue bytes.
std::vector<std::uint8_t> record(std::uint8_t label, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  std::vector<std::uint8_t> out(kCifarRecordBytes);
  out[0] = label;
  std::fill(out.begin() + 1, out.begin() + 1025, r);
  std::fill(out.begin() + 1025, out.begin() + 2049, g);
  std::fill(out.begin() + 2049, out.end(), b);
  return out;
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("shufflenas_data_test_" + std::to_string(::getpid()))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// A full-size batch file whose record i carries label (i + offset) % 10 and
// a per-record marker in the first red byte.
std::vector<std::uint8_t> batch_file(int offset) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(kCifarFileBytes));
  for (int i = 0; i < kCifarRecordsPerFile; ++i) {
    auto r = record(static_cast<std::uint8_t>((i + offset) % 10), 125, 123, 114);
    r[1] = static_cast<std::uint8_t>(offset);
    bytes.insert(bytes.end(), r.begin(), r.end());
  }
  return bytes;
}

Normalizer identity_normalizer() {
  Normalizer n;
  n.mean = {0, 0, 0};
  n.stddev = {1, 1, 1};
  return n;
}

}  // namespace

TEST(Cifar, DecodesPlanarRecord) {
  std::vector<std::uint8_t> bytes = record(6, 10, 20, 30);
  bytes[1 + 5] = 200;          // red, row 0, col 5
  bytes[1 + 1024 + 32] = 201;  // green, row 1, col 0
  const auto d = decode_cifar10_records(bytes, Split::train);
  ASSERT_EQ(d.size(), 1);
  EXPECT_EQ(d.labels[0], 6);
  const auto img = d.image(0);  // HWC
  EXPECT_EQ(img[(0 * 32 + 5) * 3 + 0], 200);
  EXPECT_EQ(img[(1 * 32 + 0) * 3 + 1], 201);
  EXPECT_EQ(img[(31 * 32 + 31) * 3 + 2], 30);
}

TEST(Cifar, RejectsBadLabelAndPartialRecord) {
  EXPECT_THROW(decode_cifar10_records(record(10, 0, 0, 0), Split::train), std::invalid_argument);
  auto partial = record(1, 0, 0, 0);
  partial.pop_back();
  EXPECT_THROW(decode_cifar10_records(partial, Split::train), std::invalid_argument);
}

TEST(Cifar, RejectsWrongSizeFile) {
  TempDir dir;
  write_bytes(dir.path() / "short.bin", record(1, 0, 0, 0));
  EXPECT_THROW(read_cifar10_file(dir.path() / "short.bin", Split::test), std::invalid_argument);
  EXPECT_THROW(read_cifar10_file(dir.path() / "missing.bin", Split::test), std::runtime_error);
  EXPECT_THROW(load_cifar10(dir.path()), std::runtime_error);
}

TEST(Cifar, LoadsDirectoryWithCanonicalSplits) {
  TempDir dir;
  for (int i = 1; i <= 5; ++i) write_bytes(dir.path() / ("data_batch_" + std::to_string(i) + ".bin"), batch_file(i));
  write_bytes(dir.path() / "test_batch.bin", batch_file(0));
  const auto c = load_cifar10(dir.path());
  EXPECT_EQ(c.train.size(), 45000);
  EXPECT_EQ(c.val.size(), 5000);
  EXPECT_EQ(c.test.size(), 10000);
  EXPECT_EQ(c.train.size() + c.val.size() + c.test.size(), 60000);
  EXPECT_EQ(c.val.split, Split::val);
  // Validation is the tail of data_batch_5 in file order.
  EXPECT_EQ(c.val.image(0)[0], 5);
  EXPECT_EQ(c.val.labels[0], (5000 + 5) % 10);
  EXPECT_EQ(c.train.image(44999)[0], 5);
  EXPECT_EQ(c.train.image(0)[0], 1);
  const auto means = channel_means(c.train);
  // One marker byte per record replaces a red 125: files 1-4 whole, half of file 5.
  const double marker = (1.0 + 2 + 3 + 4) * 10000 + 5.0 * 5000;
  EXPECT_NEAR(means[0], (125.0 * 1023 * 45000 + marker) / (1024.0 * 45000) / 255.0, 1e-12);
  EXPECT_NEAR(means[1], 123 / 255.0, 1e-12);
  EXPECT_NEAR(means[2], 114 / 255.0, 1e-12);
}

TEST(Normalize, MomentsAndAffinity) {
  Rng rng(1);
  const auto d = synthetic_dataset(SyntheticKind::striped_patterns, 200, rng);
  const auto n = Normalizer::fit(d);
  std::vector<double> sum(3, 0), sq(3, 0);
  const std::int64_t plane = 32 * 32;
  for (std::int64_t i = 0; i < d.size(); ++i) {
    const auto v = n.apply(d.image(i), 32, 32);
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t p = 0; p < plane; ++p) {
        const double x = v[static_cast<std::size_t>(c * plane + p)];
        sum[static_cast<std::size_t>(c)] += x;
        sq[static_cast<std::size_t>(c)] += x * x;
      }
  }
  const double count = static_cast<double>(d.size() * plane);
  for (int c = 0; c < 3; ++c) {
    EXPECT_LT(std::abs(sum[c] / count), 1e-3);
    EXPECT_NEAR(std::sqrt(sq[c] / count), 1.0, 1e-2);
  }
  // Affine: differences scale by 1 / std.
  std::vector<std::uint8_t> a(3072, 100), b(3072, 40);
  const auto na = n.apply(a, 32, 32), nb = n.apply(b, 32, 32);
  EXPECT_NEAR(na[0] - nb[0], (60 / 255.0) / n.stddev[0], 1e-12);
  EXPECT_NEAR(na[2048] - nb[2048], (60 / 255.0) / n.stddev[2], 1e-12);
}

TEST(Normalize, PixelAtMeanMapsToZeroAndZeroStdRejected) {
  Dataset d;
  d.height = d.width = 1;
  d.pixels = {10, 20, 30, 30, 40, 50};
  d.labels = {0, 1};
  const auto n = Normalizer::fit(d);
  EXPECT_NEAR(n.apply(std::vector<std::uint8_t>{20, 30, 40}, 1, 1)[1], 0.0, 1e-12);
  Dataset flat = d;
  flat.pixels = {7, 7, 7, 7, 7, 7};
  EXPECT_THROW(Normalizer::fit(flat), std::invalid_argument);
}

TEST(Augment, CentralCropWithoutFlipIsIdentity) {
  Rng rng(2);
  std::vector<double> img(3 * 32 * 32);
  for (auto& v : img) v = rng.normal();
  auto out = img;
  apply_augment(out, 3, 32, 32, AugmentParams{});
  EXPECT_EQ(out, img);
}

TEST(Augment, ShiftAndFlipGeometry) {
  std::vector<double> img(32 * 32);
  std::iota(img.begin(), img.end(), 1.0);
  auto out = img;
  apply_augment(out, 1, 32, 32, AugmentParams{0, 8, false, std::nullopt});
  // Crop at (0, 8): output (y, x) = input (y - 4, x + 4), zero outside.
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[4 * 32 + 0], img[0 * 32 + 4]);
  EXPECT_EQ(out[31 * 32 + 27], img[27 * 32 + 31]);
  EXPECT_EQ(out[31 * 32 + 28], 0.0);
  auto flipped = img;
  apply_augment(flipped, 1, 32, 32, AugmentParams{4, 4, true, std::nullopt});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) EXPECT_EQ(flipped[y * 32 + x], img[y * 32 + (31 - x)]);
}

TEST(Augment, CutoutZeroesBetween64And256PixelsForEveryCenter) {
  // Geometry oracle: clipped square overlap counted directly.
  for (int cy = 0; cy < 32; ++cy)
    for (int cx = 0; cx < 32; ++cx) {
      std::vector<double> img(32 * 32, 1.0);
      apply_augment(img, 1, 32, 32, AugmentParams{4, 4, false, std::pair{cy, cx}});
      const auto zeroed = std::count(img.begin(), img.end(), 0.0);
      const int h = std::min(cy + 8, 32) - std::max(cy - 8, 0);
      const int w = std::min(cx + 8, 32) - std::max(cx - 8, 0);
      EXPECT_EQ(zeroed, h * w);
      EXPECT_GE(zeroed, 64);
      EXPECT_LE(zeroed, 256);
    }
}

TEST(Augment, SampledParametersCoverRanges) {
  Rng rng(3);
  std::set<std::pair<int, int>> crops;
  int flips = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto p = sample_augment(rng, 32, 32, true);
    ASSERT_TRUE(p.cutout_center.has_value());
    EXPECT_GE(p.cutout_center->first, 0);
    EXPECT_LT(p.cutout_center->second, 32);
    crops.insert({p.crop_y, p.crop_x});
    flips += p.flip;
  }
  EXPECT_EQ(crops.size(), 81u);
  EXPECT_NEAR(static_cast<double>(flips) / n, 0.5, 0.02);
  EXPECT_FALSE(sample_augment(rng, 32, 32, false).cutout_center.has_value());
}

TEST(Augment, BatchIsDeterministicAndKeepsLabels) {
  Rng data_rng(4);
  const auto d = synthetic_dataset(SyntheticKind::two_gaussians_images, 16, data_rng);
  const auto norm = Normalizer::fit(d);
  std::vector<std::int64_t> idx{3, 1, 4, 1, 5};
  Rng a(5), b(5);
  const AugmentOptions opts{true, true};
  const auto ba = make_batch(d, idx, norm, DType::f32, opts, &a);
  const auto bb = make_batch(d, idx, norm, DType::f32, opts, &b);
  EXPECT_TRUE(ba.images.bit_equal(bb.images));
  EXPECT_EQ(ba.images.shape(), (Shape{5, 3, 32, 32}));
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(ba.labels[i], d.labels[static_cast<std::size_t>(idx[i])]);
  EXPECT_THROW(make_batch(d, idx, norm, DType::f32, opts, nullptr), std::invalid_argument);
  EXPECT_THROW(make_batch(d, {}, norm, DType::f32), std::invalid_argument);
}

TEST(Synthetic, BalancedDeterministicAndValidated) {
  for (auto kind : {SyntheticKind::two_gaussians_images, SyntheticKind::striped_patterns}) {
    Rng a(6), b(6);
    const auto d = synthetic_dataset(kind, 103, a);
    const auto e = synthetic_dataset(kind, 103, b);
    EXPECT_EQ(d.pixels, e.pixels);
    EXPECT_EQ(d.labels, e.labels);
    EXPECT_EQ(d.image_bytes(), 3072);
    std::vector<int> counts(static_cast<std::size_t>(d.num_classes), 0);
    for (int l : d.labels) ++counts[static_cast<std::size_t>(l)];
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*hi - *lo, 1);
    EXPECT_EQ(parse_synthetic_kind(synthetic_kind_name(kind)), kind);
  }
  Rng r(7);
  EXPECT_THROW(synthetic_dataset(SyntheticKind::striped_patterns, 0, r), std::invalid_argument);
  EXPECT_THROW(parse_synthetic_kind("moons"), std::invalid_argument);
}

TEST(Synthetic, TwoGaussiansAreLinearlySeparable) {
  Rng rng(8);
  const auto d = synthetic_dataset(SyntheticKind::two_gaussians_images, 400, rng);
  const auto norm = Normalizer::fit(d);
  std::vector<std::int64_t> all(static_cast<std::size_t>(d.size()));
  std::iota(all.begin(), all.end(), 0);
  const auto batch = make_batch(d, all, norm, DType::f64);
  Tensor x = batch.images;
  x = Tensor::from_values({d.size(), 3072}, x.to_vector(), DType::f64);
  // One-layer softmax regression trained by full-batch gradient descent.
  ParameterRegistry reg;
  reg.create("w", {3072, 2}, DType::f64, Init::zeros, 0);
  reg.create("b", {2}, DType::f64, Init::zeros, 0);
  Sgd sgd(SgdConfig{0.9, true, 0.0, 0.0});
  for (int step = 0; step < 30; ++step) {
    reg.zero_grad();
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = ops::softmax_cross_entropy(ops::add_row(ops::matmul(x, reg.tensor("w")), reg.tensor("b")), batch.labels);
    }
    tape.backward(loss);
    sgd.step(reg, 0.01);
  }
  const auto logits = ops::add_row(ops::matmul(x, reg.tensor("w")), reg.tensor("b")).to_vector();
  int correct = 0;
  for (std::int64_t i = 0; i < d.size(); ++i)
    correct += (logits[static_cast<std::size_t>(2 * i + 1)] > logits[static_cast<std::size_t>(2 * i)]) == (batch.labels[static_cast<std::size_t>(i)] == 1);
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(d.size()), 0.99);
}

TEST(Dataset, SubsetsAreDisjointAndComplete) {
  Rng rng(9);
  const auto d = synthetic_dataset(SyntheticKind::striped_patterns, 50, rng);
  std::vector<std::int64_t> head(20), tail(30);
  std::iota(head.begin(), head.end(), 0);
  std::iota(tail.begin(), tail.end(), 20);
  const auto a = d.subset(head, Split::train), b = d.subset(tail, Split::val);
  EXPECT_EQ(a.size() + b.size(), d.size());
  std::vector<std::uint8_t> joined = a.pixels;
  joined.insert(joined.end(), b.pixels.begin(), b.pixels.end());
  EXPECT_EQ(joined, d.pixels);
  EXPECT_EQ(b.split, Split::val);
  std::vector<std::int64_t> bad{50};
  EXPECT_THROW(d.subset(bad, Split::test), std::out_of_range);
}

TEST(Batch, IdentityNormalizerPreservesScaledPixels) {
  Dataset d;
  d.height = d.width = 2;
  d.pixels.resize(12);
  std::iota(d.pixels.begin(), d.pixels.end(), 0);
  d.labels = {3};
  std::vector<std::int64_t> idx{0};
  const auto b = make_batch(d, idx, identity_normalizer(), DType::f64);
  // HWC bytes laid out as CHW, scaled to [0, 1].
  EXPECT_NEAR(b.images.at(0), 0 / 255.0, 1e-15);
  EXPECT_NEAR(b.images.at(1), 3 / 255.0, 1e-15);
  EXPECT_NEAR(b.images.at(4), 1 / 255.0, 1e-15);
}
