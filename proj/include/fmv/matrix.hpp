#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fmv/types.hpp"

namespace fmv {

struct ExecPlan {
  std::string runner_command = "python3 {file}";
  ResourceLimits limits;
  int parallelism = 1;
  // When set, every (runner, source, input, limits) cell result is stored on
  // disk and reused, so repeated runs return identical outcomes regardless
  // of thread count.
  std::optional<std::filesystem::path> cache_dir;
};

// Runs every candidate on every test input. Cells are independent, so the
// N*K grid is processed by an OpenMP loop with plan.parallelism threads.
// Throws SpawnError if any cell fails at the infrastructure level; a matrix
// is never produced partially filled.
ExecutionMatrix build_matrix(const Task& task,
                             const std::vector<Candidate>& candidates,
                             const ExecPlan& plan);

std::string matrix_to_json(const ExecutionMatrix& matrix);
ExecutionMatrix matrix_from_json(const std::string& text);

void save_matrix(const ExecutionMatrix& matrix,
                 const std::filesystem::path& path);
ExecutionMatrix load_matrix(const std::filesystem::path& path);

std::string cache_key(const std::string& runner_command,
                      const std::string& source, const std::string& input,
                      const ResourceLimits& limits);

}  // namespace fmv
