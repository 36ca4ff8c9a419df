#include "fmv/metrics.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fmv/consensus.hpp"
#include "fmv/errors.hpp"
#include "fmv/rng.hpp"
#include "fmv/sandbox.hpp"

namespace fmv {
namespace {

using ordered_json = nlohmann::ordered_json;

double mean_of(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace

std::optional<std::vector<std::string>> normalize_oracle(
    const std::vector<std::string>& raw) {
  std::vector<std::string> norm;
  norm.reserve(raw.size());
  for (const auto& slot : raw) {
    auto n = normalize_output(slot);
    if (!n) return std::nullopt;
    norm.push_back(std::move(*n));
  }
  return norm;
}

std::vector<bool> correct_flags(const ExecutionMatrix& matrix,
                                const std::vector<std::string>& oracle_norm) {
  if (oracle_norm.size() != matrix.cols()) {
    throw DataError("task " + matrix.task_id + ": oracle has " +
                    std::to_string(oracle_norm.size()) + " outputs, matrix has " +
                    std::to_string(matrix.cols()) + " inputs");
  }
  std::vector<bool> correct(matrix.rows(), false);
  for (size_t i = 0; i < matrix.rows(); ++i) {
    if (!matrix.row_valid(i)) continue;
    bool ok = true;
    for (size_t k = 0; k < matrix.cols() && ok; ++k) {
      ok = *matrix.grid[i][k].output == oracle_norm[k];
    }
    correct[i] = ok;
  }
  return correct;
}

TaskEvaluation evaluate_task(const ExecutionMatrix& matrix,
                             const std::vector<std::string>& oracle_outputs,
                             int threads) {
  auto oracle = normalize_oracle(oracle_outputs);
  if (!oracle) {
    throw DataError("task " + matrix.task_id +
                    ": oracle output is not normalizable");
  }

  TaskEvaluation ev;
  ev.task_id = matrix.task_id;
  ev.n_candidates = matrix.rows();
  ev.correct = correct_flags(matrix, *oracle);
  ev.n_correct = static_cast<int>(
      std::count(ev.correct.begin(), ev.correct.end(), true));

  const ConsensusResult consensus = select_consensus(matrix, threads);
  ev.selected_index = consensus.selected;
  ev.no_consensus = !consensus.selected.has_value();
  ev.fmv_correct = consensus.selected && ev.correct[*consensus.selected];
  return ev;
}

double mean_at_n(const std::vector<TaskEvaluation>& evals) {
  if (evals.empty()) throw std::invalid_argument("mean_at_n: no tasks");
  double s = 0.0;
  for (const auto& ev : evals) {
    s += static_cast<double>(ev.n_correct) /
         static_cast<double>(ev.n_candidates);
  }
  return s / static_cast<double>(evals.size());
}

double best_at_n(const std::vector<TaskEvaluation>& evals) {
  if (evals.empty()) throw std::invalid_argument("best_at_n: no tasks");
  double s = 0.0;
  for (const auto& ev : evals) s += ev.n_correct > 0 ? 1.0 : 0.0;
  return s / static_cast<double>(evals.size());
}

double fmv_accuracy(const std::vector<TaskEvaluation>& evals) {
  if (evals.empty()) throw std::invalid_argument("fmv_accuracy: no tasks");
  double s = 0.0;
  for (const auto& ev : evals) s += ev.fmv_correct ? 1.0 : 0.0;
  return s / static_cast<double>(evals.size());
}

double bootstrap_error(const std::vector<double>& values, int resamples,
                       uint64_t seed) {
  if (values.empty()) {
    throw std::invalid_argument("bootstrap_error: no values");
  }
  if (resamples < 1) {
    throw std::invalid_argument("bootstrap_error: resamples must be positive");
  }
  Rng rng(seed);
  const size_t t = values.size();
  const double mhat = mean_of(values);
  double acc = 0.0;
  for (int b = 0; b < resamples; ++b) {
    double s = 0.0;
    for (size_t d = 0; d < t; ++d) s += values[rng.below(t)];
    const double m = s / static_cast<double>(t);
    acc += (m - mhat) * (m - mhat);
  }
  return std::sqrt(acc / static_cast<double>(resamples));
}

BenchmarkReport build_report(const std::vector<Task>& tasks,
                             const std::vector<ExecutionMatrix>& matrices,
                             int bootstrap_resamples, uint64_t bootstrap_seed,
                             int threads) {
  std::map<std::string, const ExecutionMatrix*> by_id;
  for (const auto& m : matrices) by_id[m.task_id] = &m;

  std::vector<const Task*> order;
  order.reserve(tasks.size());
  for (const auto& t : tasks) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](const Task* a, const Task* b) {
    return a->task_id < b->task_id;
  });

  BenchmarkReport r;
  r.n_tasks_total = static_cast<int>(tasks.size());
  r.bootstrap_resamples = bootstrap_resamples;
  r.bootstrap_seed = bootstrap_seed;

  std::vector<double> mean_vals, best_vals, fmv_vals;
  for (const Task* task : order) {
    auto it = by_id.find(task->task_id);
    if (it == by_id.end()) {
      throw DataError("no execution matrix for task " + task->task_id);
    }
    const std::optional<std::vector<std::string>> oracle =
        task->oracle_outputs ? normalize_oracle(*task->oracle_outputs)
                             : std::nullopt;
    if (!oracle) {
      ++r.n_excluded_missing_oracle;
      continue;
    }
    TaskEvaluation ev = evaluate_task(*it->second, *task->oracle_outputs,
                                      threads);
    if (ev.no_consensus) ++r.n_no_consensus;
    mean_vals.push_back(static_cast<double>(ev.n_correct) /
                        static_cast<double>(ev.n_candidates));
    best_vals.push_back(ev.n_correct > 0 ? 1.0 : 0.0);
    fmv_vals.push_back(ev.fmv_correct ? 1.0 : 0.0);
    r.per_task.push_back(std::move(ev));
  }

  r.n_tasks_evaluated = static_cast<int>(r.per_task.size());
  if (r.per_task.empty()) {
    throw DataError("no tasks with oracle outputs to evaluate");
  }
  r.mean_at_n = mean_of(mean_vals);
  r.best_at_n = mean_of(best_vals);
  r.fmv_accuracy = mean_of(fmv_vals);
  r.mean_at_n_se = bootstrap_error(mean_vals, bootstrap_resamples,
                                   bootstrap_seed);
  r.best_at_n_se = bootstrap_error(best_vals, bootstrap_resamples,
                                   bootstrap_seed);
  r.fmv_accuracy_se = bootstrap_error(fmv_vals, bootstrap_resamples,
                                      bootstrap_seed);
  return r;
}

std::string report_to_json(const BenchmarkReport& report,
                           const std::string& run_id) {
  ordered_json j;
  j["run_id"] = run_id;
  j["n_tasks_total"] = report.n_tasks_total;
  j["n_tasks_evaluated"] = report.n_tasks_evaluated;
  j["n_excluded_missing_oracle"] = report.n_excluded_missing_oracle;
  j["n_no_consensus"] = report.n_no_consensus;
  j["mean_at_n"] = report.mean_at_n;
  j["best_at_n"] = report.best_at_n;
  j["fmv_accuracy"] = report.fmv_accuracy;
  j["bootstrap"] = {{"resamples", report.bootstrap_resamples},
                    {"seed", report.bootstrap_seed},
                    {"mean_at_n_se", report.mean_at_n_se},
                    {"best_at_n_se", report.best_at_n_se},
                    {"fmv_accuracy_se", report.fmv_accuracy_se}};
  ordered_json per_task = ordered_json::array();
  for (const auto& ev : report.per_task) {
    ordered_json t;
    t["task_id"] = ev.task_id;
    t["n_candidates"] = ev.n_candidates;
    t["n_correct"] = ev.n_correct;
    t["fmv_correct"] = ev.fmv_correct;
    t["no_consensus"] = ev.no_consensus;
    t["selected_index"] =
        ev.selected_index ? ordered_json(*ev.selected_index) : ordered_json();
    per_task.push_back(std::move(t));
  }
  j["per_task"] = std::move(per_task);
  return j.dump(2);
}

std::string report_to_table(const BenchmarkReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line,
                "tasks: %d evaluated (%d total, %d without oracle)\n",
                report.n_tasks_evaluated, report.n_tasks_total,
                report.n_excluded_missing_oracle);
  out << line;
  std::snprintf(line, sizeof line,
                "mean@N %.4f +/- %.4f | best@N %.4f +/- %.4f | "
                "fmv %.4f +/- %.4f | no consensus on %d\n",
                report.mean_at_n, report.mean_at_n_se, report.best_at_n,
                report.best_at_n_se, report.fmv_accuracy,
                report.fmv_accuracy_se, report.n_no_consensus);
  out << line;
  out << "task            n_ok  sel  fmv\n";
  for (const auto& ev : report.per_task) {
    std::snprintf(line, sizeof line, "%-14s %5d %4s  %s\n",
                  ev.task_id.c_str(), ev.n_correct,
                  ev.selected_index ? std::to_string(*ev.selected_index).c_str()
                                    : "-",
                  ev.no_consensus ? "none" : (ev.fmv_correct ? "yes" : "no"));
    out << line;
  }
  return out.str();
}

std::vector<CurvePoint> scaling_curve(const std::vector<CurveInput>& tasks,
                                      const std::vector<size_t>& budgets,
                                      int trials, uint64_t seed,
                                      int bootstrap_resamples, int threads) {
  if (tasks.empty()) throw std::invalid_argument("scaling_curve: no tasks");
  if (budgets.empty()) throw std::invalid_argument("scaling_curve: no budgets");
  if (trials < 1) throw std::invalid_argument("scaling_curve: trials < 1");
  if (threads < 1) throw std::invalid_argument("scaling_curve: threads < 1");

  const size_t t_count = tasks.size();
  const size_t b_count = budgets.size();

  std::vector<std::vector<bool>> correct(t_count);
  for (size_t t = 0; t < t_count; ++t) {
    auto oracle = normalize_oracle(tasks[t].oracle_outputs);
    if (!oracle) {
      throw DataError("task " + tasks[t].matrix.task_id +
                      ": oracle output is not normalizable");
    }
    correct[t] = correct_flags(tasks[t].matrix, *oracle);
    for (size_t b = 0; b < b_count; ++b) {
      if (budgets[b] == 0 || budgets[b] > tasks[t].matrix.rows()) {
        throw std::invalid_argument(
            "scaling_curve: budget " + std::to_string(budgets[b]) +
            " outside candidate pool of task " + tasks[t].matrix.task_id);
      }
    }
  }

  // trial_fmv[b][t][r] over tasks t and trials r at budget index b.
  auto trial_count = [&](size_t t, size_t b) {
    return budgets[b] == tasks[t].matrix.rows() ? 1 : trials;
  };
  std::vector<std::vector<std::vector<double>>> trial_fmv(b_count),
      trial_mean(b_count);
  for (size_t b = 0; b < b_count; ++b) {
    trial_fmv[b].resize(t_count);
    trial_mean[b].resize(t_count);
    for (size_t t = 0; t < t_count; ++t) {
      trial_fmv[b][t].assign(trial_count(t, b), 0.0);
      trial_mean[b][t].assign(trial_count(t, b), 0.0);
    }
  }

  std::exception_ptr first_error;
  std::mutex error_mutex;
  const int64_t pairs = static_cast<int64_t>(t_count * b_count);
#pragma omp parallel for num_threads(threads) schedule(dynamic)
  for (int64_t pair = 0; pair < pairs; ++pair) {
    if (first_error) continue;
    const size_t t = static_cast<size_t>(pair) / b_count;
    const size_t b = static_cast<size_t>(pair) % b_count;
    try {
      const ExecutionMatrix& full = tasks[t].matrix;
      const size_t pool = full.rows();
      const size_t budget = budgets[b];
      const int reps = trial_count(t, b);
      for (int r = 0; r < reps; ++r) {
        Rng rng(derive_seed(seed, {static_cast<uint64_t>(t),
                                   static_cast<uint64_t>(b),
                                   static_cast<uint64_t>(r)}));
        std::vector<size_t> draw;
        if (budget == pool) {
          draw.resize(pool);
          std::iota(draw.begin(), draw.end(), size_t{0});
        } else {
          draw = rng.sample_indices(pool, budget);
        }

        ExecutionMatrix sub;
        sub.task_id = full.task_id;
        for (size_t idx : draw) {
          sub.candidate_ids.push_back(full.candidate_ids[idx]);
          sub.grid.push_back(full.grid[idx]);
        }
        const ConsensusResult consensus = select_consensus(sub, 1);
        const bool fmv_ok =
            consensus.selected && correct[t][draw[*consensus.selected]];

        int n_ok = 0;
        for (size_t idx : draw) n_ok += correct[t][idx] ? 1 : 0;

        trial_fmv[b][t][r] = fmv_ok ? 1.0 : 0.0;
        trial_mean[b][t][r] =
            static_cast<double>(n_ok) / static_cast<double>(budget);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<CurvePoint> points;
  points.reserve(b_count);
  for (size_t b = 0; b < b_count; ++b) {
    CurvePoint p;
    p.budget = budgets[b];

    std::vector<double> task_fmv(t_count), task_mean(t_count);
    for (size_t t = 0; t < t_count; ++t) {
      task_fmv[t] = mean_of(trial_fmv[b][t]);
      task_mean[t] = mean_of(trial_mean[b][t]);
    }
    p.fmv_accuracy = mean_of(task_fmv);
    p.mean_accuracy = mean_of(task_mean);

    // Pooled accuracy per trial index; tasks running fewer trials at this
    // budget (full-pool draws) contribute their single deterministic value
    // to every trial, so the spread reflects sampling noise only.
    int max_reps = 1;
    for (size_t t = 0; t < t_count; ++t) {
      max_reps = std::max<int>(max_reps, trial_count(t, b));
    }
    if (max_reps > 1) {
      std::vector<double> per_trial(max_reps, 0.0);
      for (int r = 0; r < max_reps; ++r) {
        double s = 0.0;
        for (size_t t = 0; t < t_count; ++t) {
          const auto& vals = trial_fmv[b][t];
          s += vals[static_cast<size_t>(r) % vals.size()];
        }
        per_trial[r] = s / static_cast<double>(t_count);
      }
      const double m = mean_of(per_trial);
      double acc = 0.0;
      for (double v : per_trial) acc += (v - m) * (v - m);
      p.spread = std::sqrt(acc / static_cast<double>(max_reps - 1));
    }

    p.fmv_boot_se = bootstrap_error(
        task_fmv, bootstrap_resamples,
        derive_seed(seed, {0xb007, static_cast<uint64_t>(b)}));
    points.push_back(p);
  }
  return points;
}

std::string curve_to_csv(const std::vector<CurvePoint>& points) {
  std::string out = "n,fmv_acc,mean_acc,spread\n";
  char line[128];
  for (const auto& p : points) {
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g\n", p.budget,
                  p.fmv_accuracy, p.mean_accuracy, p.spread);
    out += line;
  }
  return out;
}

}  // namespace fmv
