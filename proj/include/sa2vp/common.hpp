#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sa2vp {

// Error taxonomy. CLI maps kinds to exit codes: validation/shape/io -> 1,
// numeric -> 2.
enum class ErrKind { validation, shape, numeric, io };

class Error : public std::runtime_error {
 public:
  Error(ErrKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrKind kind() const { return kind_; }

 private:
  ErrKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) { throw Error(ErrKind::validation, msg); }
[[noreturn]] inline void fail_shape(const std::string& msg) { throw Error(ErrKind::shape, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrKind::numeric, msg); }
[[noreturn]] inline void fail_io(const std::string& msg) { throw Error(ErrKind::io, msg); }

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline void check(bool cond, ErrKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

// Deterministic RNG used everywhere. Sub-streams are derived from a master
// seed plus a purpose tag so that adding a consumer does not shift others.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  static Rng derive(uint64_t seed, const std::string& tag) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return Rng(seed ^ h);
  }

  double uniform(double lo, double hi) {
    // 53-bit mantissa draw; avoids distribution objects so the stream is
    // stable across standard library versions.
    uint64_t r = engine_() >> 11;
    double u = static_cast<double>(r) * (1.0 / 9007199254740992.0);
    return lo + (hi - lo) * u;
  }

  int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
    uint64_t span = static_cast<uint64_t>(hi - lo + 1);
    return lo + static_cast<int64_t>(engine_() % span);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sa2vp
