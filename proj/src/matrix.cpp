#include "fmv/matrix.hpp"

#include <omp.h>

#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fmv/errors.hpp"
#include "fmv/manifest.hpp"
#include "fmv/sandbox.hpp"

namespace fmv {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

ordered_json outcome_to_json(const ExecOutcome& o) {
  ordered_json j;
  j["status"] = to_string(o.status);
  if (o.output) j["output"] = *o.output;
  j["duration_ms"] = o.duration_ms;
  return j;
}

ExecOutcome outcome_from_json(const ordered_json& j) {
  ExecOutcome o;
  const std::string name = j.at("status").get<std::string>();
  const auto status = status_from_string(name);
  if (!status) throw DataError("unknown status \"" + name + "\"");
  o.status = *status;
  if (j.contains("output")) o.output = j.at("output").get<std::string>();
  if (o.status == ExecStatus::Ok && !o.output) {
    throw DataError("ok outcome without output");
  }
  if (o.status != ExecStatus::Ok) o.output.reset();
  o.duration_ms = j.value("duration_ms", int64_t{0});
  return o;
}

std::optional<ExecOutcome> cache_load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) return std::nullopt;
  try {
    ordered_json j;
    in >> j;
    ExecOutcome o = outcome_from_json(j);
    if (j.contains("exit_code") && !j.at("exit_code").is_null()) {
      o.exit_code = j.at("exit_code").get<int>();
    }
    return o;
  } catch (const std::exception&) {
    return std::nullopt;  // corrupt entry, fall through to a fresh run
  }
}

void cache_store(const fs::path& file, const ExecOutcome& o) {
  ordered_json j = outcome_to_json(o);
  j["exit_code"] = o.exit_code ? ordered_json(*o.exit_code) : ordered_json();

  // Write-then-rename keeps concurrent writers from exposing torn entries.
  const fs::path tmp = file.string() + ".tmp." + std::to_string(::getpid()) +
                       "." + std::to_string(omp_get_thread_num());
  {
    std::ofstream out(tmp);
    if (!out) return;
    out << j.dump() << '\n';
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) fs::remove(tmp, ec);
}

}  // namespace

std::string cache_key(const std::string& runner_command,
                      const std::string& source, const std::string& input,
                      const ResourceLimits& limits) {
  std::string material;
  auto add = [&material](const std::string& part) {
    material += part;
    material.push_back('\0');
  };
  add(runner_command);
  add(source);
  add(input);
  add(std::to_string(limits.wall_timeout_ms));
  add(std::to_string(limits.max_output_bytes));
  add(limits.max_memory_bytes ? std::to_string(*limits.max_memory_bytes) : "");
  return sha256_hex(material);
}

ExecutionMatrix build_matrix(const Task& task,
                             const std::vector<Candidate>& candidates,
                             const ExecPlan& plan) {
  if (plan.parallelism < 1) {
    throw std::invalid_argument("parallelism must be at least 1");
  }
  const size_t n = candidates.size();
  const size_t k = task.test_inputs.size();
  if (k == 0) throw DataError("task " + task.task_id + " has no test inputs");
  for (const auto& c : candidates) {
    if (c.task_id != task.task_id) {
      throw DataError("candidate " + c.candidate_id + " belongs to task " +
                      c.task_id + ", not " + task.task_id);
    }
  }

  if (plan.cache_dir) fs::create_directories(*plan.cache_dir);

  ExecutionMatrix m;
  m.task_id = task.task_id;
  m.candidate_ids.reserve(n);
  for (const auto& c : candidates) m.candidate_ids.push_back(c.candidate_id);
  m.grid.assign(n, std::vector<ExecOutcome>(k));

  std::exception_ptr first_error;
  std::mutex error_mutex;

  const int64_t cells = static_cast<int64_t>(n * k);
#pragma omp parallel for num_threads(plan.parallelism) schedule(dynamic)
  for (int64_t cell = 0; cell < cells; ++cell) {
    if (first_error) continue;
    const size_t i = static_cast<size_t>(cell) / k;
    const size_t j = static_cast<size_t>(cell) % k;
    try {
      std::optional<fs::path> cache_file;
      if (plan.cache_dir) {
        const std::string key = cache_key(plan.runner_command,
                                          candidates[i].source,
                                          task.test_inputs[j], plan.limits);
        cache_file = *plan.cache_dir / (key + ".json");
        if (auto hit = cache_load(*cache_file)) {
          m.grid[i][j] = std::move(*hit);
          continue;
        }
      }
      ExecOutcome out = run_candidate(candidates[i].source,
                                      plan.runner_command,
                                      task.test_inputs[j], plan.limits);
      if (cache_file) cache_store(*cache_file, out);
      m.grid[i][j] = std::move(out);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  }

  if (first_error) std::rethrow_exception(first_error);
  return m;
}

std::string matrix_to_json(const ExecutionMatrix& matrix) {
  ordered_json j;
  j["task_id"] = matrix.task_id;
  j["candidate_ids"] = matrix.candidate_ids;
  ordered_json grid = ordered_json::array();
  for (const auto& row : matrix.grid) {
    ordered_json jrow = ordered_json::array();
    for (const auto& cell : row) jrow.push_back(outcome_to_json(cell));
    grid.push_back(std::move(jrow));
  }
  j["grid"] = std::move(grid);
  return j.dump();
}

ExecutionMatrix matrix_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("bad matrix json: ") + e.what());
  }
  ExecutionMatrix m;
  try {
    m.task_id = j.at("task_id").get<std::string>();
    m.candidate_ids = j.at("candidate_ids").get<std::vector<std::string>>();
    const auto& grid = j.at("grid");
    if (grid.size() != m.candidate_ids.size()) {
      throw DataError("matrix grid rows do not match candidate_ids");
    }
    size_t k = 0;
    for (const auto& jrow : grid) {
      std::vector<ExecOutcome> row;
      for (const auto& cell : jrow) row.push_back(outcome_from_json(cell));
      if (m.grid.empty()) {
        k = row.size();
      } else if (row.size() != k) {
        throw DataError("matrix grid is ragged");
      }
      m.grid.push_back(std::move(row));
    }
    if (!m.grid.empty() && k == 0) throw DataError("matrix has zero columns");
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(std::string("bad matrix json: ") + e.what());
  }
  return m;
}

void save_matrix(const ExecutionMatrix& matrix, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << matrix_to_json(matrix) << '\n';
}

ExecutionMatrix load_matrix(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  ExecutionMatrix m = matrix_from_json(buf.str());
  if (m.task_id.empty()) {
    throw DataError(path.string() + ": matrix has empty task_id");
  }
  return m;
}

}  // namespace fmv
