#include <cmath>
#include <fstream>

#include "doctest.h"
#include "durn/data_io.hpp"
#include "durn/error.hpp"
#include "durn/ops.hpp"
#include "test_util.hpp"

using namespace durn;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// Mean and standard deviation of (noisy - clean) in 8-bit units.
std::pair<double, double> noise_stats(const Tensor& clean, double sigma, std::uint64_t seed) {
  const Tensor d = sub(add_gaussian_noise(clean, sigma, seed), clean);
  double s = 0, s2 = 0;
  const auto n = static_cast<double>(d.numel());
  for (std::int64_t i = 0; i < d.numel(); ++i) {
    const double v = d.at(i) * 255.0;
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  return {mean, std::sqrt(s2 / n - mean * mean)};
}

}  // namespace

TEST_CASE("image roundtrips") {
  const auto dir = testutil::scratch_dir("images");
  for (const int c : {1, 3}) {
    const ImageBuffer img = synthetic_image(13, 7, c, 42);
    for (const std::string ext : {".png", c == 1 ? ".pgm" : ".ppm"}) {
      const fs::path p = dir / ("img" + std::to_string(c) + ext);
      save_image(img, p);
      CHECK(load_image(p) == img);
    }
    CHECK(tensor_to_image(image_to_tensor(img)) == img);
  }
  ImageBuffer all;
  all.width = 256;
  all.height = 1;
  all.channels = 1;
  for (int v = 0; v < 256; ++v) all.samples.push_back(static_cast<std::uint8_t>(v));
  CHECK(tensor_to_image(image_to_tensor(all, DType::f64)) == all);
  CHECK(tensor_to_image(image_to_tensor(all, DType::f32)) == all);
}

TEST_CASE("image format errors") {
  const auto dir = testutil::scratch_dir("bad_images");
  write_text(dir / "notes.png", "just some text\n");
  CHECK_THROWS_AS(load_image(dir / "notes.png"), FormatError);
  write_text(dir / "short.ppm", "P6\n4 4\n255\nabc");
  CHECK_THROWS_AS(load_image(dir / "short.ppm"), FormatError);
  CHECK_THROWS_AS(load_image(dir / "absent.png"), FormatError);
  CHECK_THROWS_AS(save_image(synthetic_image(4, 4, 1, 0), dir / "x.bmp"), FormatError);

  write_text(dir / "gray.pgm", std::string("P5\n# comment\n2 2\n255\n") + '\x00' + '\x40' + '\x80' + '\xff');
  const ImageBuffer g = load_image(dir / "gray.pgm");
  CHECK(g.channels == 1);
  CHECK(g.samples == std::vector<std::uint8_t>{0, 64, 128, 255});
}

TEST_CASE("gaussian noise") {
  const Tensor clean = image_to_tensor(synthetic_image(256, 256, 1, 1), DType::f64);
  CHECK(add_gaussian_noise(clean, 0.0, 5).values() == clean.values());
  CHECK(add_gaussian_noise(clean, 30, 5).values() == add_gaussian_noise(clean, 30, 5).values());
  CHECK(add_gaussian_noise(clean, 30, 5).values() != add_gaussian_noise(clean, 30, 6).values());
  for (const double sigma : {30.0, 50.0, 70.0}) {
    const auto [mean, sd] = noise_stats(clean, sigma, 11);
    CHECK(std::abs(mean) < 0.5);
    CHECK(std::abs(sd - sigma) < 1.0);
  }
  const Tensor clamped = add_gaussian_noise(clean, 70, 3, true);
  for (double v : clamped.values()) CHECK((v >= 0.0 && v <= 1.0));
  bool escaped = false;
  for (double v : add_gaussian_noise(clean, 70, 3).values()) escaped |= v < 0.0 || v > 1.0;
  CHECK(escaped);
}

TEST_CASE("patch sampling") {
  const Tensor clean = image_to_tensor(synthetic_image(20, 12, 3, 2), DType::f64);
  const ImagePair pair{add_gaussian_noise(clean, 10, 1), clean, "p"};
  const auto full = sample_patches(pair, 12, 3, 0);
  CHECK_THROWS_AS(sample_patches(pair, 13, 1, 0), ConfigError);
  const ImagePair square{crop(pair.degraded, 0, 0, 12, 12), crop(clean, 0, 0, 12, 12), "sq"};
  const auto same = sample_patches(square, 12, 3, 0);
  REQUIRE(same.size() == 3);
  for (const auto& [d, c] : same) {
    CHECK(d.values() == square.degraded.values());
    CHECK(c.values() == square.clean.values());
  }

  const auto offsets = patch_offsets(12, 20, 5, 10000, 9);
  std::int64_t max_y = 0, max_x = 0;
  for (const auto& o : offsets) {
    CHECK((o.y >= 0 && o.y + 5 <= 12 && o.x >= 0 && o.x + 5 <= 20));
    max_y = std::max(max_y, o.y);
    max_x = std::max(max_x, o.x);
  }
  CHECK(max_y == 7);
  CHECK(max_x == 15);
  CHECK(offsets == patch_offsets(12, 20, 5, 10000, 9));

  // Crops are aligned: the offset recovered from the clean crop matches the degraded one.
  const auto patches = sample_patches(pair, 6, 20, 4);
  const auto offs = patch_offsets(12, 20, 6, 20, 4);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    CHECK(patches[i].first.values() == crop(pair.degraded, offs[i].y, offs[i].x, 6, 6).values());
    CHECK(patches[i].second.values() == crop(clean, offs[i].y, offs[i].x, 6, 6).values());
  }
  CHECK(stack_batch({clean, clean}).shape() == Shape{2, 3, 12, 20});
}

TEST_CASE("manifests") {
  const auto dir = testutil::scratch_dir("manifest");
  write_text(dir / "empty.tsv", "");
  CHECK(load_manifest(dir / "empty.tsv").records.empty());

  write_text(dir / "one.tsv", "# header\nonly_one_path.png\n");
  CHECK_THROWS_WITH_AS(load_manifest(dir / "one.tsv"), doctest::Contains(":2:"), ConfigError);

  DatasetManifest m;
  m.task = "noise";
  for (int i = 0; i < 5; ++i) {
    const ImageBuffer img = synthetic_image(16, 16, 1, static_cast<std::uint64_t>(i));
    save_image(img, dir / ("clean" + std::to_string(i) + ".png"));
    save_image(img, dir / ("noisy" + std::to_string(i) + ".png"));
    m.records.push_back({"noisy" + std::to_string(i) + ".png", "clean" + std::to_string(i) + ".png",
                         i == 0 ? "first" : "", 0});
  }
  m.records.push_back({"", "clean0.png", "", 0});
  save_manifest(m, dir / "set.tsv");
  const DatasetManifest back = load_manifest(dir / "set.tsv");
  CHECK(back.task == "noise");
  REQUIRE(back.records.size() == 6);
  CHECK(back.records[0].tags == "first");
  CHECK(back.records[5].degraded.empty());
  CHECK_THROWS_AS(load_dataset(back), ConfigError);
  const auto data = load_dataset(back, 30.0, 1);
  CHECK(data.size() == 6);
  CHECK(data[5].degraded.values() != data[5].clean.values());

  write_text(dir / "missing.tsv", "a.png\tb.png\nclean0.png\tc.png\n");
  try {
    load_manifest(dir / "missing.tsv");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("3 missing") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
}
