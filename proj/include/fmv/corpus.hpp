#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fmv/types.hpp"

namespace fmv {

struct Corpus {
  std::vector<Task> tasks;
  std::map<std::string, std::vector<Candidate>> candidates_by_task;
};

// Reads tasks.jsonl and candidates.jsonl, validating as it goes: unique ids,
// at least one test input per task, oracle length matching the inputs when
// present, candidates referencing known tasks, and per task a gapless
// sample_index run 0..N-1 (candidates are returned in that order). Errors
// carry file:line positions.
Corpus load_corpus(const std::filesystem::path& tasks_path,
                   const std::filesystem::path& candidates_path);

std::vector<Task> load_tasks(const std::filesystem::path& path);

void save_tasks_jsonl(const std::vector<Task>& tasks,
                      const std::filesystem::path& path);
void save_candidates_jsonl(const std::vector<Candidate>& candidates,
                           const std::filesystem::path& path);

struct HoldoutSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> holdout_ids;
};

// Shuffles the sorted task ids with the seeded generator and assigns the
// first ceil(T/2) to train; both halves come back sorted.
HoldoutSplit split_holdout(const std::vector<Task>& tasks, uint64_t seed);

}  // namespace fmv
