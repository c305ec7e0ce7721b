#include "sa2vp/window.hpp"

namespace sa2vp {

WindowSpec make_window(int64_t h, int64_t w, GridPos center, int width) {
  check(width >= 1 && width % 2 == 1, ErrKind::validation,
        "window width must be odd, got " + std::to_string(width));
  check(center.row >= 0 && center.row < h && center.col >= 0 && center.col < w,
        ErrKind::validation, "window center outside grid");
  WindowSpec spec;
  spec.center = center;
  spec.width = width;
  int64_t r = width / 2;
  for (int64_t dr = -r; dr <= r; ++dr) {
    int64_t row = center.row + dr;
    if (row < 0 || row >= h) continue;
    for (int64_t dc = -r; dc <= r; ++dc) {
      int64_t col = center.col + dc;
      if (col < 0 || col >= w) continue;
      spec.valid.push_back({row, col});
      spec.linear.push_back(row * w + col);
    }
  }
  return spec;
}

GridPos map_coord(GridPos q, int64_t q_h, int64_t q_w, int64_t kv_h, int64_t kv_w) {
  if (q_h == kv_h && q_w == kv_w) return q;
  if (q_h > kv_h) {
    check(q_h % kv_h == 0 && q_w % kv_w == 0, ErrKind::validation,
          "grids are not related by an integer scale");
    int64_t s = q_h / kv_h;
    return {q.row / s, q.col / s};
  }
  check(kv_h % q_h == 0 && kv_w % q_w == 0, ErrKind::validation,
        "grids are not related by an integer scale");
  int64_t s = kv_h / q_h;
  return {q.row * s + s / 2, q.col * s + s / 2};
}

std::vector<std::vector<int64_t>> build_windows(GridDims q, GridDims kv, int width) {
  std::vector<std::vector<int64_t>> out;
  out.reserve(static_cast<size_t>(q.count()));
  for (int64_t r = 0; r < q.h; ++r)
    for (int64_t c = 0; c < q.w; ++c) {
      GridPos center = map_coord({r, c}, q.h, q.w, kv.h, kv.w);
      out.push_back(make_window(kv.h, kv.w, center, width).linear);
    }
  return out;
}

}  // namespace sa2vp
