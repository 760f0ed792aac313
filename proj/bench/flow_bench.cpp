// Compares the production flow-state kernel against the plain serial
// reference, and the kernel against itself at one thread, across problem
// sizes. Build and run:   ./flow_bench [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "attnflow/attention.hpp"
#include "attnflow/dynamics.hpp"

using namespace attnflow;

namespace {

double checksum(const FlowState& st) {
  double s = 0.0;
  for (double v : st.velocities) s += v;
  return s;
}

template <typename F>
double time_ms(F&& fn, int repeats) {
  // One warmup, then best-of-repeats.
  fn();
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;

  struct Size {
    int n, d, H;
  };
  const std::vector<Size> sizes{{8, 20, 2},    {16, 64, 4},   {64, 128, 4},
                                {128, 128, 8}, {256, 256, 4}, {256, 400, 8}};

#ifdef _OPENMP
  const int max_threads = omp_get_num_procs();
#else
  const int max_threads = 1;
#endif
  std::printf("flow-state kernel benchmark (best of %d, %d threads available)\n", repeats,
              max_threads);
  std::printf("%6s %5s %3s | %13s %13s %13s | %8s %8s\n", "n", "d", "H", "reference(ms)",
              "kernel@1(ms)", "kernel@N(ms)", "vs ref", "vs 1thr");

  for (const Size& s : sizes) {
    const TokenConfiguration cfg = random_configuration(s.n, s.d, 42, 1.0);
    std::vector<HeadSpec> heads;
    for (int h = 0; h < s.H; ++h)
      heads.push_back(HeadSpec::coordinate_projection(s.d, h * s.d / s.H,
                                                      (h + 1) * s.d / s.H));

    double sum_ref = 0, sum_one = 0, sum_many = 0;

    // The reference recomputes every matrix-vector product per token pair
    // (n^2 H d^2 work), so it only runs at small sizes.
    const bool run_reference = static_cast<long>(s.n) * s.n * s.H * s.d * s.d < 100'000'000;
    const double t_ref =
        run_reference
            ? time_ms([&] { sum_ref = checksum(compute_flow_state_reference(cfg, heads)); },
                      repeats)
            : 0.0;

#ifdef _OPENMP
    omp_set_num_threads(1);
#endif
    const double t_one =
        time_ms([&] { sum_one = checksum(compute_flow_state(cfg, heads)); }, repeats);

#ifdef _OPENMP
    omp_set_num_threads(max_threads);
#endif
    const double t_many =
        time_ms([&] { sum_many = checksum(compute_flow_state(cfg, heads)); }, repeats);

    if (sum_one != sum_many) {
      std::printf("thread-count mismatch in results at n=%d d=%d H=%d\n", s.n, s.d, s.H);
      return 1;
    }
    if (run_reference) {
      const double rel = std::abs(sum_ref - sum_one) / std::max(1.0, std::abs(sum_ref));
      if (rel > 1e-10) {
        std::printf("reference mismatch %g at n=%d d=%d H=%d\n", rel, s.n, s.d, s.H);
        return 1;
      }
      std::printf("%6d %5d %3d | %13.3f %13.3f %13.3f | %7.2fx %7.2fx\n", s.n, s.d, s.H,
                  t_ref, t_one, t_many, t_ref / t_many, t_one / t_many);
    } else {
      std::printf("%6d %5d %3d | %13s %13.3f %13.3f | %7s %7.2fx\n", s.n, s.d, s.H, "-",
                  t_one, t_many, "-", t_one / t_many);
    }
    std::fflush(stdout);
  }
  return 0;
}
