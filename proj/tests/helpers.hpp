#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fmv/types.hpp"

namespace testutil {

// Grid shorthand: a string cell is an Ok outcome, nullopt a runtime error.
inline fmv::ExecutionMatrix make_matrix(
    const std::string& task_id,
    const std::vector<std::vector<std::optional<std::string>>>& rows) {
  fmv::ExecutionMatrix m;
  m.task_id = task_id;
  for (size_t i = 0; i < rows.size(); ++i) {
    m.candidate_ids.push_back(task_id + "_s" + std::to_string(i));
    std::vector<fmv::ExecOutcome> row;
    for (const auto& cell : rows[i]) {
      fmv::ExecOutcome o;
      if (cell) {
        o.status = fmv::ExecStatus::Ok;
        o.output = *cell;
        o.exit_code = 0;
      } else {
        o.status = fmv::ExecStatus::RuntimeError;
        o.exit_code = 1;
      }
      row.push_back(std::move(o));
    }
    m.grid.push_back(std::move(row));
  }
  return m;
}

class TempDir {
 public:
  TempDir() {
    const char* base = std::getenv("TMPDIR");
    std::string tmpl = std::string(base && *base ? base : "/tmp") +
                       "/fmv-test-XXXXXX";
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
    path_ = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace testutil
