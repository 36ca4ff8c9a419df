#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fmv {

enum class ExecStatus {
  Ok,
  RuntimeError,
  Timeout,
  InvalidFormat,
  OutputTooLarge,
};

const char* to_string(ExecStatus status);
std::optional<ExecStatus> status_from_string(std::string_view name);

struct ResourceLimits {
  std::int64_t wall_timeout_ms = 6000;
  std::int64_t max_output_bytes = 1 << 20;
  std::optional<std::int64_t> max_memory_bytes;
};

struct ExecOutcome {
  ExecStatus status = ExecStatus::RuntimeError;
  std::optional<std::string> output;  // present iff status == Ok, canonical form
  std::int64_t duration_ms = 0;
  std::optional<int> exit_code;  // negative = terminating signal
  std::string stderr_tail;       // diagnostics only, never compared or persisted

  bool ok() const { return status == ExecStatus::Ok; }
};

struct Task {
  std::string task_id;
  std::string prompt;
  std::vector<std::string> test_inputs;
  std::optional<std::vector<std::string>> oracle_outputs;  // evaluation only
  std::map<std::string, std::string> metadata;

  std::size_t input_count() const { return test_inputs.size(); }
};

struct Candidate {
  std::string candidate_id;
  std::string task_id;
  std::string source;
  int sample_index = 0;
};

// N x K grid of outcomes for one task; row order follows sample_index.
struct ExecutionMatrix {
  std::string task_id;
  std::vector<std::string> candidate_ids;
  std::vector<std::vector<ExecOutcome>> grid;

  std::size_t rows() const { return grid.size(); }
  std::size_t cols() const { return grid.empty() ? 0 : grid.front().size(); }

  bool row_valid(std::size_t i) const {
    for (const ExecOutcome& cell : grid[i]) {
      if (!cell.ok()) return false;
    }
    return true;
  }
};

// Rows whose every cell is Ok, ascending.
std::vector<std::size_t> valid_indices(const ExecutionMatrix& m);

}  // namespace fmv
