#pragma once

#include <stdexcept>

namespace fmv {

// Harness-side failure to launch the runner. Kept separate from candidate
// statuses: a candidate that crashes is RuntimeError, a runner that cannot
// be spawned is the operator's problem.
struct SpawnError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input artifacts (bad JSONL, schema violations,
// manifest hash mismatches).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Generation endpoint unreachable or persistently failing.
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fmv
