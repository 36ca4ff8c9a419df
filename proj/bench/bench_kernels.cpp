// Times the bucketed consensus kernel against the pairwise reference on
// synthetic ensembles of growing size. Build Release for meaningful numbers.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "fmv/consensus.hpp"
#include "fmv/simulator.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(int reps, const std::function<void()>& fn) {
  fn();  // warm up
  const auto start = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto stop = Clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

}  // namespace

int main() {
  fmv::NoiseModel model;
  model.p_correct = 0.35;
  model.p_invalid = 0.05;
  model.wrong_mode_count = 12;
  model.wrong_concentration = 0.3;
  model.seed = 7;

  std::printf("%6s %4s | %12s %12s %12s | %8s\n", "N", "K", "serial ms",
              "bucket1 ms", "bucket8 ms", "speedup");
  for (int n : {64, 256, 1024, 4096}) {
    for (int k : {5, 16}) {
      model.k_inputs = k;
      const fmv::ExecutionMatrix m =
          fmv::simulate_task(model, n, 0).matrix;
      const int reps = n <= 256 ? 50 : 5;

      int64_t sink = 0;
      const double serial = time_ms(reps, [&] {
        auto s = fmv::fmv_scores_serial(m);
        sink += s.empty() ? 0 : s.begin()->second;
      });
      const double bucket1 = time_ms(reps, [&] {
        auto s = fmv::fmv_scores(m, 1);
        sink += s.empty() ? 0 : s.begin()->second;
      });
      const double bucket8 = time_ms(reps, [&] {
        auto s = fmv::fmv_scores(m, 8);
        sink += s.empty() ? 0 : s.begin()->second;
      });

      std::printf("%6d %4d | %12.3f %12.3f %12.3f | %7.1fx\n", n, k, serial,
                  bucket1, bucket8, serial / bucket8);
      if (sink == 0x7fffffff) std::puts("");
    }
  }
  return 0;
}
