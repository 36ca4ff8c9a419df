#include "fmv/simulator.hpp"

#include <omp.h>

#include <cstdio>
#include <exception>
#include <mutex>
#include <stdexcept>

#include "fmv/rng.hpp"

namespace fmv {
namespace {

constexpr int64_t kSimTimeoutMs = 6000;

std::string wrong_output(int mode, int k) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "wrong%d_%d", mode, k);
  return buf;
}

std::string correct_output(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ok_%d", k);
  return buf;
}

// -1 means the correct behavior, 0..wrong_mode_count-1 a wrong mode.
int draw_wrong_mode(Rng& rng, const NoiseModel& model) {
  if (model.wrong_mode_count == 1) return 0;
  if (rng.unit() < model.wrong_concentration) return 0;
  return 1 + static_cast<int>(
                 rng.below(static_cast<uint64_t>(model.wrong_mode_count - 1)));
}

int draw_behavior_given_valid(Rng& rng, const NoiseModel& model) {
  const double p_wrong = 1.0 - model.p_correct - model.p_invalid;
  const double denom = model.p_correct + p_wrong;
  const bool correct =
      denom <= 0.0 ? false : rng.unit() < model.p_correct / denom;
  return correct ? -1 : draw_wrong_mode(rng, model);
}

ExecOutcome ok_cell(std::string output) {
  ExecOutcome o;
  o.status = ExecStatus::Ok;
  o.output = std::move(output);
  o.duration_ms = 1;
  o.exit_code = 0;
  return o;
}

ExecOutcome error_cell(Rng& rng) {
  ExecOutcome o;
  if (rng.below(2) == 0) {
    o.status = ExecStatus::RuntimeError;
    o.duration_ms = 0;
    o.exit_code = 1;
  } else {
    o.status = ExecStatus::Timeout;
    o.duration_ms = kSimTimeoutMs;
    o.exit_code = -9;
  }
  return o;
}

}  // namespace

void validate(const NoiseModel& model) {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(model.p_correct) || !in_unit(model.p_invalid) ||
      model.p_correct + model.p_invalid > 1.0) {
    throw std::invalid_argument(
        "p_correct and p_invalid must lie in [0,1] and sum to at most 1");
  }
  if (!in_unit(model.wrong_concentration)) {
    throw std::invalid_argument("wrong_concentration must lie in [0,1]");
  }
  if (!in_unit(model.per_cell_corruption)) {
    throw std::invalid_argument("per_cell_corruption must lie in [0,1]");
  }
  if (model.wrong_mode_count < 1) {
    throw std::invalid_argument("wrong_mode_count must be at least 1");
  }
  if (model.k_inputs < 1) {
    throw std::invalid_argument("k_inputs must be at least 1");
  }
}

SimulatedTask simulate_task(const NoiseModel& model, int n_candidates,
                            size_t task_index) {
  validate(model);
  if (n_candidates < 1) {
    throw std::invalid_argument("n_candidates must be at least 1");
  }

  char id[32];
  std::snprintf(id, sizeof id, "sim%04zu", task_index);

  SimulatedTask st;
  st.task.task_id = id;
  st.task.prompt = std::string("synthetic task ") + id;
  st.task.oracle_outputs.emplace();
  for (int k = 0; k < model.k_inputs; ++k) {
    char input[32];
    std::snprintf(input, sizeof input, "in_%d", k);
    st.task.test_inputs.push_back(input);
    st.task.oracle_outputs->push_back(correct_output(k));
  }

  st.matrix.task_id = st.task.task_id;
  Rng rng(derive_seed(model.seed, {static_cast<uint64_t>(task_index)}));
  for (int i = 0; i < n_candidates; ++i) {
    char cid[48];
    std::snprintf(cid, sizeof cid, "%s_s%02d", id, i);
    st.matrix.candidate_ids.push_back(cid);

    const double u = rng.unit();
    int behavior;    // -1 correct, otherwise wrong mode
    int error_at = -1;
    ExecOutcome error;
    if (u < model.p_correct) {
      behavior = -1;
    } else if (u < model.p_correct + model.p_invalid) {
      behavior = draw_behavior_given_valid(rng, model);
      error_at = static_cast<int>(
          rng.below(static_cast<uint64_t>(model.k_inputs)));
      error = error_cell(rng);
    } else {
      behavior = draw_wrong_mode(rng, model);
    }

    std::vector<ExecOutcome> row;
    row.reserve(model.k_inputs);
    for (int k = 0; k < model.k_inputs; ++k) {
      if (k == error_at) {
        row.push_back(error);
      } else {
        row.push_back(ok_cell(behavior < 0 ? correct_output(k)
                                           : wrong_output(behavior, k)));
      }
    }
    if (model.per_cell_corruption > 0.0) {
      for (int k = 0; k < model.k_inputs; ++k) {
        if (rng.unit() < model.per_cell_corruption &&
            row[k].status == ExecStatus::Ok) {
          char noise[48];
          std::snprintf(noise, sizeof noise, "noise_%d_%d", i, k);
          row[k].output = noise;
        }
      }
    }
    st.matrix.grid.push_back(std::move(row));
  }
  return st;
}

std::vector<SimulatedTask> simulate_tasks(const NoiseModel& model, int n_tasks,
                                          int n_candidates, int threads) {
  validate(model);
  if (n_tasks < 1) throw std::invalid_argument("n_tasks must be at least 1");
  if (threads < 1) throw std::invalid_argument("threads must be at least 1");

  std::vector<SimulatedTask> out(n_tasks);
  std::exception_ptr first_error;
  std::mutex error_mutex;
#pragma omp parallel for num_threads(threads) schedule(dynamic)
  for (int t = 0; t < n_tasks; ++t) {
    if (first_error) continue;
    try {
      out[t] = simulate_task(model, n_candidates, static_cast<size_t>(t));
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

std::vector<CurvePoint> run_scaling_experiment(
    const NoiseModel& model, int n_tasks, int n_candidates,
    const std::vector<size_t>& budgets, int trials, uint64_t curve_seed,
    int bootstrap_resamples, int threads) {
  std::vector<SimulatedTask> sims =
      simulate_tasks(model, n_tasks, n_candidates, threads);
  std::vector<CurveInput> inputs;
  inputs.reserve(sims.size());
  for (auto& s : sims) {
    inputs.push_back({std::move(s.matrix), std::move(*s.task.oracle_outputs)});
  }
  return scaling_curve(inputs, budgets, trials, curve_seed,
                       bootstrap_resamples, threads);
}

}  // namespace fmv
