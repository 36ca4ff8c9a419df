#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fmv/types.hpp"

namespace fmv {

// Canonical output form: valid UTF-8, LF separators, whitespace trimmed at
// both ends of every line, no leading or trailing blank lines. nullopt when
// the bytes are not valid UTF-8 or nothing remains after stripping.
// Idempotent.
std::optional<std::string> normalize_output(std::string_view raw);

bool utf8_valid(std::string_view bytes);

// Split a runner template into argv, substituting the {file} placeholder.
// Tokens split on unquoted whitespace; single and double quotes group.
std::vector<std::string> render_runner_argv(const std::string& runner_command,
                                            const std::string& file_path);

// Execute one candidate on one test input under the given limits.
//
// The source is written to a unique temporary file and launched via the
// runner template (e.g. "python3 {file}"); test_input is piped to stdin,
// stdout is captured and normalized, stderr is kept as a bounded
// diagnostic tail. The child runs in its own process group; timeout and
// output-overflow kills take down the whole group, and the child is always
// reaped before returning.
//
// Throws SpawnError when the runner itself cannot be launched; that is an
// infrastructure fault, never mapped to a candidate status.
ExecOutcome run_candidate(const std::string& program_source,
                          const std::string& runner_command,
                          const std::string& test_input,
                          const ResourceLimits& limits);

}  // namespace fmv
