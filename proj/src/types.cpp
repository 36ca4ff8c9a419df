#include "fmv/types.hpp"

namespace fmv {

const char* to_string(ExecStatus status) {
  switch (status) {
    case ExecStatus::Ok:
      return "ok";
    case ExecStatus::RuntimeError:
      return "runtime_error";
    case ExecStatus::Timeout:
      return "timeout";
    case ExecStatus::InvalidFormat:
      return "invalid_format";
    case ExecStatus::OutputTooLarge:
      return "output_too_large";
  }
  return "unknown";
}

std::optional<ExecStatus> status_from_string(std::string_view name) {
  if (name == "ok") return ExecStatus::Ok;
  if (name == "runtime_error") return ExecStatus::RuntimeError;
  if (name == "timeout") return ExecStatus::Timeout;
  if (name == "invalid_format") return ExecStatus::InvalidFormat;
  if (name == "output_too_large") return ExecStatus::OutputTooLarge;
  return std::nullopt;
}

std::vector<std::size_t> valid_indices(const ExecutionMatrix& m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (m.row_valid(i)) out.push_back(i);
  }
  return out;
}

}  // namespace fmv
