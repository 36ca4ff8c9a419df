#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fmv/types.hpp"

namespace fmv {

struct SamplingConfig {
  std::string endpoint_url;
  std::string model_name;
  double temperature = 0.6;
  double top_p = 0.95;
  int max_new_tokens = 8192;
  int n_samples = 1;
  int request_timeout_ms = 120000;
  int max_retries = 2;
  std::string think_tag = "think";
  std::string prompt_template = "{prompt}";
};

// Pulls runnable source out of a completion: the last complete fenced code
// block wins; with no fences, a leading <tag>...</tag> reasoning span is
// dropped and the trimmed remainder is taken verbatim. Empty means the
// completion contained nothing usable.
std::optional<std::string> extract_code(const std::string& completion,
                                        const std::string& think_tag);

std::string render_prompt(const std::string& prompt_template,
                          const Task& task);

// Samples config.n_samples completions for the task from an OpenAI-style
// chat endpoint, asking for the whole batch in one request and topping up
// one by one if the server returns fewer choices. Candidates come back in
// sample order starting at start_index; a completion that yields no code
// still produces its candidate with empty source. Throws TransportError
// once retries are exhausted.
std::vector<Candidate> sample_candidates(const SamplingConfig& config,
                                         const Task& task,
                                         int start_index = 0);

}  // namespace fmv
