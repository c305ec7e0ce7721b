// Timing comparison between the reference and the OpenMP kernel backends.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "sa2vp/kernels.hpp"

using namespace sa2vp;
namespace k = sa2vp::kernels;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double flops, const std::function<void()>& fn, int reps) {
  k::set_backend(k::Backend::reference);
  double ref_ms = time_ms(fn, reps);
  k::set_backend(k::Backend::parallel);
  double par_ms = time_ms(fn, reps);
  std::printf("%-28s ref %9.3f ms  par %9.3f ms  speedup %5.2fx", name, ref_ms, par_ms,
              ref_ms / par_ms);
  if (flops > 0) std::printf("  (%6.2f Gflop/s par)", flops / par_ms / 1e6);
  std::printf("\n");
}

std::vector<double> rnd(int64_t n) {
  Rng rng(12345);
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

}  // namespace

int main() {
  std::printf("threads: %d\n\n", k::thread_count());

  for (int64_t n : {128, 256, 512}) {
    auto a = rnd(n * n), b = rnd(n * n);
    std::vector<double> c(static_cast<size_t>(n * n));
    char name[64];
    std::snprintf(name, sizeof(name), "matmul_nn %lldx%lldx%lld", static_cast<long long>(n),
                  static_cast<long long>(n), static_cast<long long>(n));
    report(name, 2.0 * n * n * n, [&] { k::matmul_nn(a.data(), b.data(), c.data(), n, n, n); },
           n >= 512 ? 3 : 10);
  }

  {
    int64_t nb = 256, m = 16, kk = 16, n = 16;
    auto a = rnd(nb * m * kk), b = rnd(nb * kk * n);
    std::vector<double> c(static_cast<size_t>(nb * m * n));
    report("bmm_nn 256x[16x16x16]", 2.0 * nb * m * kk * n,
           [&] { k::bmm_nn(a.data(), b.data(), c.data(), nb, m, kk, n); }, 20);
  }

  {
    int64_t rows = 4096, d = 64;
    auto x = rnd(rows * d);
    std::vector<double> y(x.size());
    report("softmax 4096x64", 0, [&] { k::softmax(x.data(), y.data(), rows, d, 1); }, 20);

    auto gain = rnd(d), bias = rnd(d);
    std::vector<double> mean(static_cast<size_t>(rows)), rstd(mean.size());
    report("layer_norm 4096x64", 0,
           [&] {
             k::layer_norm(x.data(), gain.data(), bias.data(), 1e-5, y.data(), mean.data(),
                           rstd.data(), rows, d);
           },
           20);
  }

  {
    int64_t n = 1 << 22;
    auto x = rnd(n), g = rnd(n);
    std::vector<double> m(static_cast<size_t>(n), 0.0), v(m.size(), 0.0);
    auto p = x;
    report("adamw_step 4M", 0,
           [&] {
             k::adamw_step(p.data(), g.data(), m.data(), v.data(), n, 1e-3, 0.9, 0.999, 1e-8,
                           1e-4, 1);
           },
           5);
  }
  return 0;
}
