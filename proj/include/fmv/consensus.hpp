#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fmv/types.hpp"

namespace fmv {

// Outcome of functional majority voting over one execution matrix. A row is
// in valid_set when all of its cells finished Ok. selected is empty when the
// valid set is empty; scores holds S(c_i) for every valid row; tie_group
// lists the rows sharing the winning score (selected is its minimum, which
// under sample ordering is the earliest sample).
struct ConsensusResult {
  std::optional<size_t> selected;
  std::map<size_t, int64_t> scores;
  std::vector<size_t> valid_set;
  std::vector<size_t> tie_group;
};

// S(c_i): count of (other valid row, test input) pairs whose normalized
// output equals row i's, summed over all inputs.
int64_t fmv_score(const ExecutionMatrix& matrix, size_t row);

// Scores for every valid row. The parallel version buckets identical
// outputs per column and derives each row's agreement from bucket sizes;
// the serial version compares row pairs directly and is kept as the
// reference the kernel is checked against.
std::map<size_t, int64_t> fmv_scores(const ExecutionMatrix& matrix,
                                     int threads = 1);
std::map<size_t, int64_t> fmv_scores_serial(const ExecutionMatrix& matrix);

ConsensusResult select_consensus(const ExecutionMatrix& matrix,
                                 int threads = 1);

// Per-input synthetic targets: the modal Ok output across all candidates,
// independent of row validity. A slot with no Ok outputs stays undefined.
// Modal ties resolve to the lexicographically smallest output.
struct PointwiseTarget {
  std::vector<std::optional<std::string>> target;
  std::vector<std::map<std::string, int>> vote_counts;
  std::vector<int> support;
};

PointwiseTarget pointwise_targets(const ExecutionMatrix& matrix);

enum class RewardMode { Joint, Pointwise };

struct RewardRecord {
  size_t candidate_index = 0;
  double reward = 0.0;
  RewardMode mode = RewardMode::Joint;
  bool undefined_target = false;
};

// Joint: 1.0 iff the row is valid and matches the selected row on every
// input. With no consensus every reward is 0.0.
std::vector<RewardRecord> reward_joint(const ExecutionMatrix& matrix,
                                       const ConsensusResult& consensus);

// Pointwise: 1.0 iff the row is valid and matches every defined target
// slot. When all slots are undefined, rewards are 0.0 and flagged.
std::vector<RewardRecord> reward_pointwise(const ExecutionMatrix& matrix,
                                           const PointwiseTarget& target);

std::string consensus_to_jsonl_record(const std::string& task_id,
                                      const ExecutionMatrix& matrix,
                                      const ConsensusResult& consensus);
std::string target_to_jsonl_record(const std::string& task_id,
                                   const PointwiseTarget& target);
std::string rewards_to_jsonl_record(const std::string& task_id,
                                    const ExecutionMatrix& matrix,
                                    const std::vector<RewardRecord>& rewards);

}  // namespace fmv
