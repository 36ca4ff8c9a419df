#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fmv/types.hpp"

namespace fmv {

struct TaskEvaluation {
  std::string task_id;
  size_t n_candidates = 0;
  int n_correct = 0;
  bool fmv_correct = false;
  bool no_consensus = false;
  std::optional<size_t> selected_index;
  std::vector<bool> correct;
};

// Normalizes every slot; empty when any slot fails, which callers treat the
// same as a missing oracle.
std::optional<std::vector<std::string>> normalize_oracle(
    const std::vector<std::string>& raw);

// A candidate is correct when it is valid and matches the normalized oracle
// on every input.
std::vector<bool> correct_flags(const ExecutionMatrix& matrix,
                                const std::vector<std::string>& oracle_norm);

TaskEvaluation evaluate_task(const ExecutionMatrix& matrix,
                             const std::vector<std::string>& oracle_outputs,
                             int threads = 1);

double mean_at_n(const std::vector<TaskEvaluation>& evals);
double best_at_n(const std::vector<TaskEvaluation>& evals);
double fmv_accuracy(const std::vector<TaskEvaluation>& evals);

// Root mean squared deviation of resample means around the full-sample mean,
// with B in the denominator, so a single resample that reproduces the mean
// gives exactly zero.
double bootstrap_error(const std::vector<double>& values, int resamples,
                       uint64_t seed);

struct BenchmarkReport {
  int n_tasks_total = 0;
  int n_tasks_evaluated = 0;
  int n_excluded_missing_oracle = 0;
  int n_no_consensus = 0;
  double mean_at_n = 0.0;
  double best_at_n = 0.0;
  double fmv_accuracy = 0.0;
  int bootstrap_resamples = 0;
  uint64_t bootstrap_seed = 0;
  double mean_at_n_se = 0.0;
  double best_at_n_se = 0.0;
  double fmv_accuracy_se = 0.0;
  std::vector<TaskEvaluation> per_task;
};

// Tasks evaluate in task_id order. Tasks without usable oracle outputs are
// excluded from every aggregate and counted. Throws DataError when a task
// has no matrix or nothing is left to evaluate.
BenchmarkReport build_report(const std::vector<Task>& tasks,
                             const std::vector<ExecutionMatrix>& matrices,
                             int bootstrap_resamples, uint64_t bootstrap_seed,
                             int threads = 1);

std::string report_to_json(const BenchmarkReport& report,
                           const std::string& run_id);
std::string report_to_table(const BenchmarkReport& report);

struct CurveInput {
  ExecutionMatrix matrix;
  std::vector<std::string> oracle_outputs;
};

struct CurvePoint {
  size_t budget = 0;
  double fmv_accuracy = 0.0;
  double mean_accuracy = 0.0;
  double spread = 0.0;
  double fmv_boot_se = 0.0;
};

// Subsamples `budget` candidates per task without replacement, `trials`
// times, and reruns consensus selection on each submatrix. A budget equal
// to the full pool collapses to one identity draw. mean_accuracy averages
// the correct fraction over the same draws, so the budget-1 point equals
// plain mean accuracy. spread is the trial-to-trial standard deviation of
// the pooled FMV accuracy; fmv_boot_se bootstraps over tasks.
std::vector<CurvePoint> scaling_curve(const std::vector<CurveInput>& tasks,
                                      const std::vector<size_t>& budgets,
                                      int trials, uint64_t seed,
                                      int bootstrap_resamples,
                                      int threads = 1);

std::string curve_to_csv(const std::vector<CurvePoint>& points);

}  // namespace fmv
