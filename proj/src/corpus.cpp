#include "fmv/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "fmv/errors.hpp"
#include "fmv/rng.hpp"

namespace fmv {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail_at(const fs::path& path, size_t line,
                          const std::string& what) {
  throw DataError(path.filename().string() + ":" + std::to_string(line) +
                  ": " + what);
}

// Calls fn(json, line_number) for every non-blank line.
template <typename Fn>
void for_each_record(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      fail_at(path, line_no, std::string("bad json: ") + e.what());
    }
    if (!j.is_object()) fail_at(path, line_no, "record is not an object");
    fn(j, line_no);
  }
}

std::string require_string(const ordered_json& j, const char* key,
                           const fs::path& path, size_t line) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    fail_at(path, line, std::string("missing string field \"") + key + "\"");
  }
  return j.at(key).get<std::string>();
}

std::vector<std::string> require_string_array(const ordered_json& j,
                                              const char* key,
                                              const fs::path& path,
                                              size_t line) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    fail_at(path, line, std::string("missing array field \"") + key + "\"");
  }
  std::vector<std::string> out;
  for (const auto& item : j.at(key)) {
    if (!item.is_string()) {
      fail_at(path, line, std::string(key) + " must contain only strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

std::vector<Task> load_tasks(const fs::path& path) {
  std::vector<Task> tasks;
  std::set<std::string> seen;
  for_each_record(path, [&](const ordered_json& j, size_t line) {
    Task t;
    t.task_id = require_string(j, "task_id", path, line);
    if (t.task_id.empty()) fail_at(path, line, "task_id is empty");
    if (!seen.insert(t.task_id).second) {
      fail_at(path, line, "duplicate task_id \"" + t.task_id + "\"");
    }
    t.prompt = require_string(j, "prompt", path, line);
    t.test_inputs = require_string_array(j, "test_inputs", path, line);
    if (t.test_inputs.empty()) {
      fail_at(path, line, "task needs at least one test input");
    }
    if (j.contains("oracle_outputs") && !j.at("oracle_outputs").is_null()) {
      t.oracle_outputs = require_string_array(j, "oracle_outputs", path, line);
      if (t.oracle_outputs->size() != t.test_inputs.size()) {
        fail_at(path, line, "oracle_outputs length " +
                                std::to_string(t.oracle_outputs->size()) +
                                " does not match test_inputs length " +
                                std::to_string(t.test_inputs.size()));
      }
    }
    if (j.contains("metadata")) {
      const auto& meta = j.at("metadata");
      if (!meta.is_object()) fail_at(path, line, "metadata must be an object");
      for (const auto& [key, value] : meta.items()) {
        t.metadata[key] = value.is_string() ? value.get<std::string>()
                                            : value.dump();
      }
    }
    tasks.push_back(std::move(t));
  });
  return tasks;
}

Corpus load_corpus(const fs::path& tasks_path, const fs::path& candidates_path) {
  Corpus corpus;
  corpus.tasks = load_tasks(tasks_path);
  std::set<std::string> task_ids;
  for (const auto& t : corpus.tasks) task_ids.insert(t.task_id);

  std::set<std::string> seen_candidates;
  for_each_record(candidates_path, [&](const ordered_json& j, size_t line) {
    Candidate c;
    c.candidate_id = require_string(j, "candidate_id", candidates_path, line);
    if (c.candidate_id.empty()) {
      fail_at(candidates_path, line, "candidate_id is empty");
    }
    if (!seen_candidates.insert(c.candidate_id).second) {
      fail_at(candidates_path, line,
              "duplicate candidate_id \"" + c.candidate_id + "\"");
    }
    c.task_id = require_string(j, "task_id", candidates_path, line);
    if (!task_ids.count(c.task_id)) {
      fail_at(candidates_path, line,
              "candidate references unknown task \"" + c.task_id + "\"");
    }
    c.source = require_string(j, "source", candidates_path, line);
    if (!j.contains("sample_index") ||
        !j.at("sample_index").is_number_integer()) {
      fail_at(candidates_path, line, "missing integer field \"sample_index\"");
    }
    c.sample_index = j.at("sample_index").get<int>();
    if (c.sample_index < 0) {
      fail_at(candidates_path, line, "sample_index is negative");
    }
    corpus.candidates_by_task[c.task_id].push_back(std::move(c));
  });

  for (auto& [task_id, rows] : corpus.candidates_by_task) {
    std::sort(rows.begin(), rows.end(),
              [](const Candidate& a, const Candidate& b) {
                return a.sample_index < b.sample_index;
              });
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].sample_index != static_cast<int>(i)) {
        throw DataError("task " + task_id + ": sample_index values must run 0.." +
                        std::to_string(rows.size() - 1) + " without gaps, found " +
                        std::to_string(rows[i].sample_index) + " at position " +
                        std::to_string(i));
      }
    }
  }
  return corpus;
}

void save_tasks_jsonl(const std::vector<Task>& tasks, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& t : tasks) {
    ordered_json j;
    j["task_id"] = t.task_id;
    j["prompt"] = t.prompt;
    j["test_inputs"] = t.test_inputs;
    if (t.oracle_outputs) j["oracle_outputs"] = *t.oracle_outputs;
    if (!t.metadata.empty()) {
      ordered_json meta = ordered_json::object();
      for (const auto& [key, value] : t.metadata) meta[key] = value;
      j["metadata"] = std::move(meta);
    }
    out << j.dump() << '\n';
  }
}

void save_candidates_jsonl(const std::vector<Candidate>& candidates,
                           const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& c : candidates) {
    ordered_json j;
    j["candidate_id"] = c.candidate_id;
    j["task_id"] = c.task_id;
    j["sample_index"] = c.sample_index;
    j["source"] = c.source;
    out << j.dump() << '\n';
  }
}

HoldoutSplit split_holdout(const std::vector<Task>& tasks, uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(tasks.size());
  for (const auto& t : tasks) ids.push_back(t.task_id);
  std::sort(ids.begin(), ids.end());

  Rng rng(seed);
  rng.shuffle(ids);

  const size_t train_n = (ids.size() + 1) / 2;
  HoldoutSplit split;
  split.train_ids.assign(ids.begin(), ids.begin() + train_n);
  split.holdout_ids.assign(ids.begin() + train_n, ids.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.holdout_ids.begin(), split.holdout_ids.end());
  return split;
}

}  // namespace fmv
