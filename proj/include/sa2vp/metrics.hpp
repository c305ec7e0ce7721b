#pragma once

// Line-delimited training metrics. Formatting is fixed so identical runs
// produce byte-identical files.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace sa2vp {

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);

  void row(int64_t step, const std::string& split, double loss_base, double loss_prompt,
           double loss_all, double accuracy);

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

// Plain-text matrix export: "h w" header then h rows of w reals.
void write_matrix(const std::filesystem::path& path, int64_t h, int64_t w,
                  const std::vector<double>& values);

}  // namespace sa2vp
