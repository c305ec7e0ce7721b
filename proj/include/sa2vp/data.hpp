#pragma once

// Desk-scale datasets. Task A: classify a single shape (identity). Task B:
// classify the relative arrangement of a square and a circle; intensity and
// distance vary, the label depends only on the spatial relation. Shapes are
// rendered without antialiasing into cells aligned with the token grid so
// token-level locality is crisp.

#include <filesystem>
#include <string>
#include <vector>

#include "sa2vp/common.hpp"

namespace sa2vp::data {

enum class TaskVariant { task_a_pretrain, task_b_transfer };

struct SyntheticTaskSpec {
  TaskVariant variant = TaskVariant::task_a_pretrain;
  int64_t image_size = 32;
  int64_t cell = 8;  // shape cell size; aligned with the backbone patch size
  int64_t num_classes = 8;
  int64_t samples_per_class = 125;
  uint64_t seed = 0;
  double noise_level = 0.0;

  void validate() const;
};

// Number of shape / arrangement classes available per task.
int64_t vocabulary_size(TaskVariant variant);

struct Sample {
  std::vector<double> pixels;  // channels x H x W, values in [0,1]
  int64_t label = 0;
};

struct Dataset {
  int64_t channels = 1;
  int64_t height = 0;
  int64_t width = 0;
  int64_t num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<Sample> train, val, test;
};

// Deterministic per seed; splits are disjoint and class-balanced 8/1/1.
Dataset generate(const SyntheticTaskSpec& spec);

// Exports root/<class_name>/<id>.ppm plus a manifest (path TAB label lines).
void export_folder(const Dataset& ds, const std::filesystem::path& root);

// Loads a class-per-subdirectory image folder; labels follow lexicographic
// subdirectory order. Images are resized to image_size if needed
// (nearest-neighbor). Undecodable files are skipped with a note on stderr.
Dataset load_folder(const std::filesystem::path& root, int64_t image_size);

// PPM/PGM (P5/P6) 8-bit image io.
void write_pnm(const std::filesystem::path& path, const std::vector<double>& pixels,
               int64_t channels, int64_t h, int64_t w);
bool read_pnm(const std::filesystem::path& path, std::vector<double>& pixels, int64_t& channels,
              int64_t& h, int64_t& w);

std::vector<double> resize_nearest(const std::vector<double>& src, int64_t channels, int64_t h,
                                   int64_t w, int64_t out_size);

}  // namespace sa2vp::data
