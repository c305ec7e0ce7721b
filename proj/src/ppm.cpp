#include <cstdint>
#include <fstream>
#include <iostream>

#include "sa2vp/data.hpp"

namespace sa2vp::data {

void write_pnm(const std::filesystem::path& path, const std::vector<double>& pixels,
               int64_t channels, int64_t h, int64_t w) {
  check(channels == 1 || channels == 3, ErrKind::validation, "write_pnm: 1 or 3 channels only");
  check(static_cast<int64_t>(pixels.size()) == channels * h * w, ErrKind::validation,
        "write_pnm: pixel count mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) fail_io("write_pnm: cannot open " + path.string());
  f << (channels == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  // planar [c][y][x] -> interleaved rows
  std::vector<unsigned char> row(static_cast<size_t>(w * channels));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < channels; ++c) {
        double v = pixels[static_cast<size_t>(c * h * w + y * w + x)];
        v = std::min(1.0, std::max(0.0, v));
        row[static_cast<size_t>(x * channels + c)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) fail_io("write_pnm: write failed for " + path.string());
}

namespace {
bool skip_to_token(std::istream& in, std::string& tok) {
  tok.clear();
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
      return true;
    }
  }
  return false;
}
}  // namespace

bool read_pnm(const std::filesystem::path& path, std::vector<double>& pixels, int64_t& channels,
              int64_t& h, int64_t& w) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return false;
  std::string magic, sw, sh, smax;
  if (!skip_to_token(f, magic)) return false;
  if (magic != "P5" && magic != "P6") return false;
  if (!skip_to_token(f, sw) || !skip_to_token(f, sh) || !skip_to_token(f, smax)) return false;
  channels = magic == "P5" ? 1 : 3;
  try {
    w = std::stoll(sw);
    h = std::stoll(sh);
  } catch (...) {
    return false;
  }
  long maxval = std::stol(smax);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) return false;
  std::vector<unsigned char> raw(static_cast<size_t>(channels * h * w));
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size())) return false;
  pixels.assign(raw.size(), 0.0);
  // interleaved -> planar
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < channels; ++c)
        pixels[static_cast<size_t>(c * h * w + y * w + x)] =
            raw[static_cast<size_t>((y * w + x) * channels + c)] / static_cast<double>(maxval);
  return true;
}

}  // namespace sa2vp::data
