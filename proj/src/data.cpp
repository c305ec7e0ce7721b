#include "sa2vp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

namespace sa2vp::data {

namespace {

// Shape vocabulary for task A, arrangement vocabulary for task B.
const char* kShapeNames[] = {"0_square", "1_circle", "2_triangle", "3_cross",
                             "4_diamond", "5_ring",   "6_xmark",    "7_bar"};
// Direction of the circle relative to the square; cardinals first.
const char* kArrangementNames[] = {"0_east",      "1_north",     "2_south",     "3_west",
                                   "4_northeast", "5_northwest", "6_southeast", "7_southwest"};
const int64_t kArrangementDelta[][2] = {{0, 1},  {-1, 0}, {1, 0},  {0, -1},
                                        {-1, 1}, {-1, -1}, {1, 1}, {1, -1}};

constexpr int kSquare = 0;
constexpr int kCircle = 1;

// Hard-edged masks at integer coordinates; no antialiasing by design so shape
// identity is decidable from single pixels.
bool shape_mask(int shape, int64_t r, int64_t c, int64_t cs) {
  double c0 = (cs - 1) / 2.0;
  double rad = cs / 2.0 - 1.0;
  double dr = r - c0, dc = c - c0;
  bool in_box = r >= 1 && r <= cs - 2 && c >= 1 && c <= cs - 2;
  switch (shape) {
    case kSquare:
      return in_box;
    case kCircle:
      return dr * dr + dc * dc <= rad * rad;
    case 2:  // lower-left triangle
      return in_box && c <= r;
    case 3:  // plus
      return in_box && (std::fabs(dr) < 1.0 || std::fabs(dc) < 1.0);
    case 4:  // diamond
      return std::fabs(dr) + std::fabs(dc) <= rad;
    case 5: {  // ring
      double d2 = dr * dr + dc * dc;
      double inner = rad / 2.0;
      return d2 <= rad * rad && d2 >= inner * inner;
    }
    case 6:  // x
      return in_box && (std::fabs(r - c) < 1.0 || std::fabs(r + c - (cs - 1)) < 1.0);
    case 7:  // horizontal bar
      return in_box && std::fabs(dr) < 1.0;
    default:
      return false;
  }
}

void draw_shape(std::vector<double>& img, int64_t image_size, int shape, int64_t cell_row,
                int64_t cell_col, int64_t cs, double intensity) {
  for (int64_t r = 0; r < cs; ++r)
    for (int64_t c = 0; c < cs; ++c)
      if (shape_mask(shape, r, c, cs))
        img[static_cast<size_t>((cell_row * cs + r) * image_size + cell_col * cs + c)] = intensity;
}

}  // namespace

int64_t vocabulary_size(TaskVariant variant) {
  return variant == TaskVariant::task_a_pretrain ? 8 : 8;
}

void SyntheticTaskSpec::validate() const {
  check(image_size > 0 && cell > 0 && image_size % cell == 0, ErrKind::validation,
        "synthetic task: image_size must be a multiple of cell");
  check(image_size / cell >= 2, ErrKind::validation, "synthetic task: need at least a 2x2 grid");
  check(num_classes >= 2, ErrKind::validation, "synthetic task: need at least 2 classes");
  check(num_classes <= vocabulary_size(variant), ErrKind::validation,
        "synthetic task: num_classes " + std::to_string(num_classes) +
            " exceeds vocabulary of " + std::to_string(vocabulary_size(variant)));
  check(samples_per_class > 0, ErrKind::validation, "synthetic task: samples_per_class > 0");
  check(noise_level >= 0.0, ErrKind::validation, "synthetic task: noise_level >= 0");
}

namespace {

Sample make_sample(const SyntheticTaskSpec& spec, int64_t label, Rng& rng) {
  int64_t cells = spec.image_size / spec.cell;
  Sample s;
  s.label = label;
  s.pixels.assign(static_cast<size_t>(spec.image_size * spec.image_size), 0.0);

  if (spec.variant == TaskVariant::task_a_pretrain) {
    int64_t row = rng.uniform_int(0, cells - 1);
    int64_t col = rng.uniform_int(0, cells - 1);
    double intensity = rng.uniform(0.4, 1.0);
    draw_shape(s.pixels, spec.image_size, static_cast<int>(label), row, col, spec.cell, intensity);
  } else {
    // Place square and circle so the circle sits in direction `label` from
    // the square; arbitrary distance, independent intensities.
    int64_t dr = kArrangementDelta[label][0];
    int64_t dc = kArrangementDelta[label][1];
    int64_t max_dist = cells - 1;
    while (true) {
      int64_t dist = rng.uniform_int(1, max_dist);
      int64_t sq_row = rng.uniform_int(0, cells - 1);
      int64_t sq_col = rng.uniform_int(0, cells - 1);
      int64_t ci_row = sq_row + dr * dist;
      int64_t ci_col = sq_col + dc * dist;
      if (ci_row < 0 || ci_row >= cells || ci_col < 0 || ci_col >= cells) continue;
      draw_shape(s.pixels, spec.image_size, kSquare, sq_row, sq_col, spec.cell,
                 rng.uniform(0.4, 1.0));
      draw_shape(s.pixels, spec.image_size, kCircle, ci_row, ci_col, spec.cell,
                 rng.uniform(0.4, 1.0));
      break;
    }
  }
  if (spec.noise_level > 0) {
    for (double& p : s.pixels) {
      p += rng.uniform(-spec.noise_level, spec.noise_level);
      p = std::min(1.0, std::max(0.0, p));
    }
  }
  return s;
}

}  // namespace

Dataset generate(const SyntheticTaskSpec& spec) {
  spec.validate();
  Rng rng = Rng::derive(spec.seed, spec.variant == TaskVariant::task_a_pretrain
                                       ? "synthetic.task_a"
                                       : "synthetic.task_b");
  Dataset ds;
  ds.channels = 1;
  ds.height = spec.image_size;
  ds.width = spec.image_size;
  ds.num_classes = spec.num_classes;
  const char** names =
      spec.variant == TaskVariant::task_a_pretrain ? kShapeNames : kArrangementNames;
  for (int64_t k = 0; k < spec.num_classes; ++k) ds.class_names.push_back(names[k]);

  int64_t spc = spec.samples_per_class;
  int64_t n_train = spc * 8 / 10;
  int64_t n_val = (spc - n_train) / 2;
  for (int64_t k = 0; k < spec.num_classes; ++k) {
    for (int64_t i = 0; i < spc; ++i) {
      Sample s = make_sample(spec, k, rng);
      if (i < n_train)
        ds.train.push_back(std::move(s));
      else if (i < n_train + n_val)
        ds.val.push_back(std::move(s));
      else
        ds.test.push_back(std::move(s));
    }
  }
  // Interleave classes within each split so mini-batches are mixed even
  // before the training loop shuffles.
  Rng shuffler = Rng::derive(spec.seed, "synthetic.shuffle");
  shuffler.shuffle(ds.train);
  shuffler.shuffle(ds.val);
  shuffler.shuffle(ds.test);
  return ds;
}

void export_folder(const Dataset& ds, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.tsv");
  if (!manifest) fail_io("export_folder: cannot write manifest in " + root.string());
  std::vector<int64_t> counter(static_cast<size_t>(ds.num_classes), 0);
  auto dump = [&](const std::vector<Sample>& split, const char* tag) {
    for (const auto& s : split) {
      const std::string& cls = ds.class_names[static_cast<size_t>(s.label)];
      fs::create_directories(root / cls);
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%05lld.ppm", tag,
                    static_cast<long long>(counter[static_cast<size_t>(s.label)]++));
      fs::path rel = fs::path(cls) / name;
      write_pnm(root / rel, s.pixels, ds.channels, ds.height, ds.width);
      manifest << rel.string() << "\t" << s.label << "\n";
    }
  };
  dump(ds.train, "train");
  dump(ds.val, "val");
  dump(ds.test, "test");
}

std::vector<double> resize_nearest(const std::vector<double>& src, int64_t channels, int64_t h,
                                   int64_t w, int64_t out_size) {
  std::vector<double> dst(static_cast<size_t>(channels * out_size * out_size));
  for (int64_t c = 0; c < channels; ++c)
    for (int64_t y = 0; y < out_size; ++y)
      for (int64_t x = 0; x < out_size; ++x) {
        int64_t sy = y * h / out_size;
        int64_t sx = x * w / out_size;
        dst[static_cast<size_t>(c * out_size * out_size + y * out_size + x)] =
            src[static_cast<size_t>(c * h * w + sy * w + sx)];
      }
  return dst;
}

Dataset load_folder(const std::filesystem::path& root, int64_t image_size) {
  namespace fs = std::filesystem;
  if (!fs::exists(root) || !fs::is_directory(root))
    fail_io("load_folder: no such directory: " + root.string());

  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  check(!class_dirs.empty(), ErrKind::validation,
        "load_folder: no class subdirectories in " + root.string());

  Dataset ds;
  ds.height = image_size;
  ds.width = image_size;
  ds.num_classes = static_cast<int64_t>(class_dirs.size());
  int64_t channels = -1;

  for (size_t label = 0; label < class_dirs.size(); ++label) {
    ds.class_names.push_back(class_dirs[label].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[label]))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
      std::cerr << "load_folder: warning: empty class directory " << class_dirs[label] << "\n";

    std::vector<Sample> loaded;
    for (const auto& f : files) {
      std::vector<double> px;
      int64_t ch, h, w;
      if (!read_pnm(f, px, ch, h, w)) {
        std::cerr << "load_folder: skipping undecodable file " << f << "\n";
        continue;
      }
      if (channels == -1) channels = ch;
      if (ch != channels) {
        std::cerr << "load_folder: skipping " << f << " (channel count differs)\n";
        continue;
      }
      if (h != image_size || w != image_size) px = resize_nearest(px, ch, h, w, image_size);
      loaded.push_back({std::move(px), static_cast<int64_t>(label)});
    }
    // 8/1/1 split per class over the sorted file order.
    int64_t n = static_cast<int64_t>(loaded.size());
    int64_t n_train = n * 8 / 10;
    int64_t n_val = (n - n_train) / 2;
    for (int64_t i = 0; i < n; ++i) {
      if (i < n_train)
        ds.train.push_back(std::move(loaded[static_cast<size_t>(i)]));
      else if (i < n_train + n_val)
        ds.val.push_back(std::move(loaded[static_cast<size_t>(i)]));
      else
        ds.test.push_back(std::move(loaded[static_cast<size_t>(i)]));
    }
  }
  ds.channels = channels == -1 ? 1 : channels;
  return ds;
}

}  // namespace sa2vp::data
