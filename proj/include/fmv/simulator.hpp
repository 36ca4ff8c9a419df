#pragma once

#include <cstdint>
#include <vector>

#include "fmv/metrics.hpp"
#include "fmv/types.hpp"

namespace fmv {

// Synthetic candidate populations for studying consensus behavior without a
// model in the loop. Each candidate lands on the correct behavior with
// probability p_correct, is invalid with probability p_invalid, and
// otherwise picks one of wrong_mode_count consistent wrong behaviors; the
// first wrong mode absorbs wrong_concentration of that mass, the rest is
// uniform. per_cell_corruption then flips individual cells to unique noise.
struct NoiseModel {
  double p_correct = 0.4;
  double p_invalid = 0.1;
  int wrong_mode_count = 8;
  double wrong_concentration = 0.2;
  int k_inputs = 5;
  double per_cell_corruption = 0.0;
  uint64_t seed = 42;
};

void validate(const NoiseModel& model);

struct SimulatedTask {
  Task task;
  ExecutionMatrix matrix;
};

// Deterministic in (model, n_candidates, task_index): every task draws from
// its own substream, so task order and thread count never matter.
SimulatedTask simulate_task(const NoiseModel& model, int n_candidates,
                            size_t task_index);

std::vector<SimulatedTask> simulate_tasks(const NoiseModel& model, int n_tasks,
                                          int n_candidates, int threads = 1);

std::vector<CurvePoint> run_scaling_experiment(
    const NoiseModel& model, int n_tasks, int n_candidates,
    const std::vector<size_t>& budgets, int trials, uint64_t curve_seed,
    int bootstrap_resamples, int threads = 1);

}  // namespace fmv
