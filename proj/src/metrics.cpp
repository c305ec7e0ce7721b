#include "sa2vp/metrics.hpp"

#include <cstdio>
#include <vector>

#include "sa2vp/common.hpp"

namespace sa2vp {

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : path_(path) {
  std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::trunc);
  if (!out_) fail_io("cannot open metrics file " + path.string());
  out_ << "step,split,loss_base,loss_prompt,loss_all,accuracy\n";
}

void MetricsWriter::row(int64_t step, const std::string& split, double loss_base,
                        double loss_prompt, double loss_all, double accuracy) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%s,%.10g,%.10g,%.10g,%.10g\n",
                static_cast<long long>(step), split.c_str(), loss_base, loss_prompt, loss_all,
                accuracy);
  out_ << buf;
  out_.flush();
}

void write_matrix(const std::filesystem::path& path, int64_t h, int64_t w,
                  const std::vector<double>& values) {
  check(static_cast<int64_t>(values.size()) == h * w, ErrKind::validation,
        "write_matrix: value count mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_io("cannot open matrix file " + path.string());
  out << h << " " << w << "\n";
  char buf[64];
  for (int64_t r = 0; r < h; ++r) {
    for (int64_t c = 0; c < w; ++c) {
      std::snprintf(buf, sizeof(buf), "%.10g", values[static_cast<size_t>(r * w + c)]);
      out << (c ? " " : "") << buf;
    }
    out << "\n";
  }
}

}  // namespace sa2vp
