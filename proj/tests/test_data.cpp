#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "sa2vp/data.hpp"
#include "support/oracles.hpp"

using namespace sa2vp;
using namespace sa2vp::data;
namespace fs = std::filesystem;

namespace {

SyntheticTaskSpec default_b() {
  SyntheticTaskSpec spec;
  spec.variant = TaskVariant::task_b_transfer;
  spec.image_size = 32;
  spec.cell = 8;
  spec.num_classes = 4;
  spec.samples_per_class = 250;
  spec.seed = 11;
  return spec;
}

fs::path scratch(const std::string& leaf) {
  auto p = fs::temp_directory_path() / "sa2vp_data_test" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool same_dataset(const Dataset& a, const Dataset& b) {
  auto same_split = [](const std::vector<Sample>& x, const std::vector<Sample>& y) {
    if (x.size() != y.size()) return false;
    for (size_t i = 0; i < x.size(); ++i) {
      if (x[i].label != y[i].label) return false;
      if (x[i].pixels != y[i].pixels) return false;  // bit-identical
    }
    return true;
  };
  return same_split(a.train, b.train) && same_split(a.val, b.val) && same_split(a.test, b.test);
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  auto spec = default_b();
  CHECK(same_dataset(generate(spec), generate(spec)));
  auto other = spec;
  other.seed = 12;
  CHECK(!same_dataset(generate(spec), generate(other)));
}

TEST_CASE("default transfer task splits 800/100/100 with class balance") {
  auto ds = generate(default_b());
  CHECK(ds.train.size() == 800);
  CHECK(ds.val.size() == 100);
  CHECK(ds.test.size() == 100);
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    std::vector<int64_t> counts(4, 0);
    for (const auto& s : *split) counts[static_cast<size_t>(s.label)]++;
    int64_t lo = *std::min_element(counts.begin(), counts.end());
    int64_t hi = *std::max_element(counts.begin(), counts.end());
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("class count beyond the arrangement vocabulary is rejected") {
  auto spec = default_b();
  spec.num_classes = 9;
  CHECK_THROWS_AS(generate(spec), Error);
  spec.num_classes = 8;
  spec.samples_per_class = 10;
  auto ds = generate(spec);  // all eight relations render
  CHECK(ds.num_classes == 8);
}

TEST_CASE("pixel-location oracle is perfect at zero noise and degrades with noise") {
  auto spec = default_b();
  spec.num_classes = 8;
  spec.samples_per_class = 40;
  auto clean = generate(spec);
  CHECK(sa2vp::testing::oracle_accuracy(clean.train, 32, 8) == 1.0);
  CHECK(sa2vp::testing::oracle_accuracy(clean.test, 32, 8) == 1.0);

  auto noisy = spec;
  noisy.noise_level = 0.45;
  auto very_noisy = spec;
  very_noisy.noise_level = 0.9;
  double acc0 = 1.0;
  double acc1 = sa2vp::testing::oracle_accuracy(generate(noisy).train, 32, 8);
  double acc2 = sa2vp::testing::oracle_accuracy(generate(very_noisy).train, 32, 8);
  CHECK(acc0 >= acc1);
  CHECK(acc1 >= acc2);
  CHECK(acc2 < 1.0);
}

TEST_CASE("task A renders every shape class distinctly") {
  SyntheticTaskSpec spec;
  spec.variant = TaskVariant::task_a_pretrain;
  spec.num_classes = 8;
  spec.samples_per_class = 5;
  spec.seed = 3;
  auto ds = generate(spec);
  CHECK(ds.num_classes == 8);
  CHECK(ds.class_names.size() == 8);
  // every sample has ink
  for (const auto& s : ds.train) {
    double sum = 0;
    for (double p : s.pixels) sum += p;
    CHECK(sum > 1.0);
  }
}

TEST_CASE("pnm round-trip stays within quantization tolerance") {
  Rng rng(5);
  std::vector<double> img(16 * 16);
  for (auto& p : img) p = rng.uniform(0, 1);
  auto path = scratch("pnm") / "img.ppm";
  write_pnm(path, img, 1, 16, 16);
  std::vector<double> back;
  int64_t ch, h, w;
  REQUIRE(read_pnm(path, back, ch, h, w));
  CHECK(ch == 1);
  CHECK(h == 16);
  CHECK(w == 16);
  for (size_t i = 0; i < img.size(); ++i) CHECK(std::fabs(back[i] - img[i]) <= 0.5 / 255 + 1e-12);
}

TEST_CASE("export then load_folder reproduces the images up to quantization") {
  auto spec = default_b();
  spec.samples_per_class = 20;
  auto ds = generate(spec);
  auto root = scratch("roundtrip");
  export_folder(ds, root);
  auto loaded = load_folder(root, 32);
  CHECK(loaded.num_classes == 4);
  CHECK(loaded.train.size() + loaded.val.size() + loaded.test.size() ==
        ds.train.size() + ds.val.size() + ds.test.size());

  // Compare per-label multisets of quantized images.
  auto quantize = [](std::vector<double> px) {
    for (auto& v : px) v = std::lround(std::min(1.0, std::max(0.0, v)) * 255.0) / 255.0;
    return px;
  };
  auto collect = [&](const Dataset& d, bool quant) {
    std::map<int64_t, std::vector<std::vector<double>>> by_label;
    for (const auto* split : {&d.train, &d.val, &d.test})
      for (const auto& s : *split)
        by_label[s.label].push_back(quant ? quantize(s.pixels) : s.pixels);
    for (auto& [_, v] : by_label) std::sort(v.begin(), v.end());
    return by_label;
  };
  auto a = collect(ds, true);
  auto b = collect(loaded, false);
  REQUIRE(a.size() == b.size());
  for (auto& [label, images] : a) CHECK(images == b[label]);

  // manifest lists every sample
  std::ifstream manifest(root / "manifest.tsv");
  int64_t lines = 0;
  std::string line;
  while (std::getline(manifest, line))
    if (!line.empty()) ++lines;
  CHECK(lines == static_cast<int64_t>(ds.train.size() + ds.val.size() + ds.test.size()));
}

TEST_CASE("load_folder: small layout, missing path, undecodable files") {
  auto root = scratch("folder");
  std::vector<double> img(8 * 8, 0.5);
  for (const char* cls : {"0_a", "1_b"}) {
    fs::create_directories(root / cls);
    for (int i = 0; i < 3; ++i)
      write_pnm(root / cls / ("img" + std::to_string(i) + ".ppm"), img, 1, 8, 8);
  }
  auto ds = load_folder(root, 8);
  CHECK(ds.num_classes == 2);
  CHECK(ds.train.size() + ds.val.size() + ds.test.size() == 6);
  CHECK(ds.class_names == std::vector<std::string>{"0_a", "1_b"});

  CHECK_THROWS_AS(load_folder(root / "nope", 8), Error);

  {
    std::ofstream bad(root / "0_a" / "broken.ppm");
    bad << "not a pixmap";
  }
  auto ds2 = load_folder(root, 8);  // skips the broken file
  CHECK(ds2.train.size() + ds2.val.size() + ds2.test.size() == 6);
}

TEST_CASE("load_folder resizes to the requested image size") {
  auto root = scratch("resize");
  fs::create_directories(root / "0_x");
  std::vector<double> img(16 * 16, 0.25);
  write_pnm(root / "0_x" / "a.ppm", img, 1, 16, 16);
  auto ds = load_folder(root, 8);
  // a single file lands in the test split under the 8/1/1 rule
  REQUIRE(!ds.test.empty());
  CHECK(ds.test[0].pixels.size() == 64);
  CHECK(ds.test[0].pixels[0] == doctest::Approx(0.25).epsilon(0.01));
}
