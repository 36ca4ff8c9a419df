#include "fmv/consensus.hpp"

#include <omp.h>

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace fmv {
namespace {

using ordered_json = nlohmann::ordered_json;

const std::string& cell_output(const ExecutionMatrix& m, size_t i, size_t k) {
  return *m.grid[i][k].output;
}

}  // namespace

int64_t fmv_score(const ExecutionMatrix& matrix, size_t row) {
  if (row >= matrix.rows()) {
    throw std::invalid_argument("fmv_score: row out of range");
  }
  if (!matrix.row_valid(row)) {
    throw std::invalid_argument("fmv_score: row is not in the valid set");
  }
  int64_t score = 0;
  for (size_t other = 0; other < matrix.rows(); ++other) {
    if (other == row || !matrix.row_valid(other)) continue;
    for (size_t k = 0; k < matrix.cols(); ++k) {
      if (cell_output(matrix, row, k) == cell_output(matrix, other, k)) {
        ++score;
      }
    }
  }
  return score;
}

std::map<size_t, int64_t> fmv_scores_serial(const ExecutionMatrix& matrix) {
  const std::vector<size_t> valid = valid_indices(matrix);
  std::map<size_t, int64_t> scores;
  for (size_t i : valid) scores[i] = 0;
  for (size_t a : valid) {
    for (size_t b : valid) {
      if (a == b) continue;
      for (size_t k = 0; k < matrix.cols(); ++k) {
        if (cell_output(matrix, a, k) == cell_output(matrix, b, k)) {
          ++scores[a];
        }
      }
    }
  }
  return scores;
}

std::map<size_t, int64_t> fmv_scores(const ExecutionMatrix& matrix,
                                     int threads) {
  if (threads < 1) throw std::invalid_argument("threads must be at least 1");
  const std::vector<size_t> valid = valid_indices(matrix);
  const size_t n = matrix.rows();
  const size_t k = matrix.cols();

  // Row i agrees with (bucket size - 1) other rows wherever outputs match,
  // so per-column frequency counts replace the pairwise comparison.
  std::vector<int64_t> total(n, 0);
#pragma omp parallel num_threads(threads)
  {
    std::vector<int64_t> local(n, 0);
#pragma omp for schedule(static)
    for (int64_t col = 0; col < static_cast<int64_t>(k); ++col) {
      std::unordered_map<std::string_view, int64_t> buckets;
      for (size_t i : valid) {
        ++buckets[cell_output(matrix, i, static_cast<size_t>(col))];
      }
      for (size_t i : valid) {
        local[i] += buckets[cell_output(matrix, i, static_cast<size_t>(col))] - 1;
      }
    }
#pragma omp critical
    for (size_t i = 0; i < n; ++i) total[i] += local[i];
  }

  std::map<size_t, int64_t> scores;
  for (size_t i : valid) scores[i] = total[i];
  return scores;
}

ConsensusResult select_consensus(const ExecutionMatrix& matrix, int threads) {
  ConsensusResult result;
  result.valid_set = valid_indices(matrix);
  result.scores = fmv_scores(matrix, threads);
  if (result.valid_set.empty()) return result;

  int64_t best = -1;
  for (const auto& [row, score] : result.scores) best = std::max(best, score);
  for (const auto& [row, score] : result.scores) {
    if (score == best) result.tie_group.push_back(row);
  }
  result.selected = result.tie_group.front();
  return result;
}

PointwiseTarget pointwise_targets(const ExecutionMatrix& matrix) {
  const size_t k = matrix.cols();
  PointwiseTarget t;
  t.target.assign(k, std::nullopt);
  t.vote_counts.assign(k, {});
  t.support.assign(k, 0);

  for (size_t col = 0; col < k; ++col) {
    auto& votes = t.vote_counts[col];
    for (size_t i = 0; i < matrix.rows(); ++i) {
      if (matrix.grid[i][col].status == ExecStatus::Ok) {
        ++votes[cell_output(matrix, i, col)];
        ++t.support[col];
      }
    }
    // Ascending key order makes a strict comparison keep the
    // lexicographically smallest output among tied modes.
    int best = 0;
    for (const auto& [output, count] : votes) {
      if (count > best) {
        best = count;
        t.target[col] = output;
      }
    }
  }
  return t;
}

std::vector<RewardRecord> reward_joint(const ExecutionMatrix& matrix,
                                       const ConsensusResult& consensus) {
  std::vector<RewardRecord> rewards(matrix.rows());
  for (size_t i = 0; i < matrix.rows(); ++i) {
    rewards[i].candidate_index = i;
    rewards[i].mode = RewardMode::Joint;
    if (!consensus.selected || !matrix.row_valid(i)) continue;
    bool match = true;
    for (size_t col = 0; col < matrix.cols() && match; ++col) {
      match = cell_output(matrix, i, col) ==
              cell_output(matrix, *consensus.selected, col);
    }
    rewards[i].reward = match ? 1.0 : 0.0;
  }
  return rewards;
}

std::vector<RewardRecord> reward_pointwise(const ExecutionMatrix& matrix,
                                           const PointwiseTarget& target) {
  if (target.target.size() != matrix.cols()) {
    throw std::invalid_argument("pointwise target width does not match matrix");
  }
  const bool all_undefined =
      std::all_of(target.target.begin(), target.target.end(),
                  [](const auto& slot) { return !slot.has_value(); });

  std::vector<RewardRecord> rewards(matrix.rows());
  for (size_t i = 0; i < matrix.rows(); ++i) {
    rewards[i].candidate_index = i;
    rewards[i].mode = RewardMode::Pointwise;
    rewards[i].undefined_target = all_undefined;
    if (all_undefined || !matrix.row_valid(i)) continue;
    bool match = true;
    for (size_t col = 0; col < matrix.cols() && match; ++col) {
      if (!target.target[col]) continue;
      match = cell_output(matrix, i, col) == *target.target[col];
    }
    rewards[i].reward = match ? 1.0 : 0.0;
  }
  return rewards;
}

std::string consensus_to_jsonl_record(const std::string& task_id,
                                      const ExecutionMatrix& matrix,
                                      const ConsensusResult& consensus) {
  ordered_json j;
  j["task_id"] = task_id;
  j["selected_index"] =
      consensus.selected ? ordered_json(*consensus.selected) : ordered_json();
  j["selected_candidate_id"] =
      consensus.selected ? ordered_json(matrix.candidate_ids[*consensus.selected])
                         : ordered_json();
  j["no_consensus"] = !consensus.selected.has_value();
  j["valid_set"] = consensus.valid_set;
  ordered_json scores = ordered_json::object();
  for (const auto& [row, score] : consensus.scores) {
    scores[std::to_string(row)] = score;
  }
  j["scores"] = std::move(scores);
  j["tie_group"] = consensus.tie_group;
  return j.dump();
}

std::string target_to_jsonl_record(const std::string& task_id,
                                   const PointwiseTarget& target) {
  ordered_json j;
  j["task_id"] = task_id;
  ordered_json slots = ordered_json::array();
  for (const auto& slot : target.target) {
    slots.push_back(slot ? ordered_json(*slot) : ordered_json());
  }
  j["target"] = std::move(slots);
  j["support"] = target.support;
  ordered_json counts = ordered_json::array();
  for (const auto& votes : target.vote_counts) {
    ordered_json c = ordered_json::object();
    for (const auto& [output, count] : votes) c[output] = count;
    counts.push_back(std::move(c));
  }
  j["vote_counts"] = std::move(counts);
  return j.dump();
}

std::string rewards_to_jsonl_record(const std::string& task_id,
                                    const ExecutionMatrix& matrix,
                                    const std::vector<RewardRecord>& rewards) {
  ordered_json j;
  j["task_id"] = task_id;
  j["mode"] = !rewards.empty() && rewards.front().mode == RewardMode::Pointwise
                  ? "pointwise"
                  : "joint";
  ordered_json list = ordered_json::array();
  for (const auto& r : rewards) {
    ordered_json item;
    item["candidate_id"] = matrix.candidate_ids[r.candidate_index];
    item["candidate_index"] = r.candidate_index;
    item["reward"] = r.reward;
    if (r.undefined_target) item["undefined_target"] = true;
    list.push_back(std::move(item));
  }
  j["rewards"] = std::move(list);
  return j.dump();
}

}  // namespace fmv
