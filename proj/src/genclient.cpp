#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "fmv/genclient.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "fmv/errors.hpp"

namespace fmv {
namespace {

using nlohmann::json;

constexpr int kMaxTopUpRounds = 16;

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Splits "scheme://host[:port][/prefix]" into the client base and the path
// prefix the endpoint paths are appended to.
struct Endpoint {
  std::string base;
  std::string prefix;
};

Endpoint parse_endpoint(const std::string& url) {
  const size_t scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw TransportError("endpoint url needs a scheme: " + url);
  }
  const size_t slash = url.find('/', scheme + 3);
  Endpoint ep;
  if (slash == std::string::npos) {
    ep.base = url;
  } else {
    ep.base = url.substr(0, slash);
    ep.prefix = url.substr(slash);
    while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
  }
  if (ep.base.size() == scheme + 3) {
    throw TransportError("endpoint url has no host: " + url);
  }
  return ep;
}

std::optional<std::string> api_key() {
  for (const char* name : {"FMV_API_KEY", "OPENAI_API_KEY"}) {
    if (const char* v = std::getenv(name); v && *v) return std::string(v);
  }
  return std::nullopt;
}

bool is_fence_line(const std::string& line) {
  size_t i = line.find_first_not_of(" \t");
  return i != std::string::npos && line.compare(i, 3, "```") == 0;
}

// Returns the body of the last complete fenced block, if any.
std::optional<std::string> last_fenced_block(const std::string& text) {
  std::optional<std::string> found;
  std::string block;
  bool in_block = false;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    const std::string line =
        text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    if (is_fence_line(line)) {
      if (in_block) {
        found = block;
      } else {
        block.clear();
      }
      in_block = !in_block;
    } else if (in_block) {
      if (!block.empty()) block.push_back('\n');
      block += line;
    }
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  return found;
}

}  // namespace

std::optional<std::string> extract_code(const std::string& completion,
                                        const std::string& think_tag) {
  if (auto block = last_fenced_block(completion)) return block;

  std::string text = completion;
  if (!think_tag.empty()) {
    const std::string open = "<" + think_tag + ">";
    const std::string close = "</" + think_tag + ">";
    const size_t start = text.find_first_not_of(" \t\r\n");
    if (start != std::string::npos && text.compare(start, open.size(), open) == 0) {
      const size_t end = text.find(close, start + open.size());
      if (end != std::string::npos) text = text.substr(end + close.size());
    }
  }
  text = trim(text);
  if (text.empty()) return std::nullopt;
  return text;
}

std::string render_prompt(const std::string& prompt_template, const Task& task) {
  std::string out = prompt_template;
  const std::string needle = "{prompt}";
  size_t pos = 0;
  while ((pos = out.find(needle, pos)) != std::string::npos) {
    out.replace(pos, needle.size(), task.prompt);
    pos += task.prompt.size();
  }
  return out;
}

std::vector<Candidate> sample_candidates(const SamplingConfig& config,
                                         const Task& task, int start_index) {
  if (config.n_samples < 1) {
    throw std::invalid_argument("n_samples must be at least 1");
  }
  const Endpoint ep = parse_endpoint(config.endpoint_url);
  const std::string prompt = render_prompt(config.prompt_template, task);

  httplib::Client client(ep.base);
  client.set_connection_timeout(std::chrono::milliseconds(config.request_timeout_ms));
  client.set_read_timeout(std::chrono::milliseconds(config.request_timeout_ms));
  client.set_write_timeout(std::chrono::milliseconds(config.request_timeout_ms));

  httplib::Headers headers;
  if (auto key = api_key()) headers.emplace("Authorization", "Bearer " + *key);

  // One request per round, asking for everything still missing; retries
  // cover transient failures, top-up rounds cover short batches.
  auto request_batch = [&](int want) -> std::vector<std::string> {
    json payload;
    payload["model"] = config.model_name;
    payload["messages"] = json::array({{{"role", "user"}, {"content", prompt}}});
    payload["temperature"] = config.temperature;
    payload["top_p"] = config.top_p;
    payload["max_tokens"] = config.max_new_tokens;
    payload["n"] = want;
    const std::string body = payload.dump();

    std::string last_failure = "no attempt made";
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(250LL << (attempt - 1)));
      }
      auto res = client.Post(ep.prefix + "/chat/completions", headers, body,
                             "application/json");
      if (!res) {
        last_failure = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_failure = "http " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        throw TransportError("generation request rejected with http " +
                             std::to_string(res->status) + ": " + res->body);
      }
      json reply;
      try {
        reply = json::parse(res->body);
      } catch (const std::exception& e) {
        last_failure = std::string("bad response json: ") + e.what();
        continue;
      }
      if (!reply.contains("choices") || !reply["choices"].is_array() ||
          reply["choices"].empty()) {
        last_failure = "response has no choices";
        continue;
      }
      std::vector<std::string> completions;
      for (const auto& choice : reply["choices"]) {
        completions.push_back(
            choice.value("message", json::object()).value("content", ""));
      }
      return completions;
    }
    throw TransportError("generation failed after " +
                         std::to_string(config.max_retries + 1) +
                         " attempts; last: " + last_failure);
  };

  std::vector<std::string> completions;
  for (int round = 0; static_cast<int>(completions.size()) < config.n_samples;
       ++round) {
    if (round >= kMaxTopUpRounds) {
      throw TransportError("endpoint keeps returning short batches for task " +
                           task.task_id);
    }
    const int want = config.n_samples - static_cast<int>(completions.size());
    for (auto& c : request_batch(want)) {
      completions.push_back(std::move(c));
      if (static_cast<int>(completions.size()) == config.n_samples) break;
    }
  }

  std::vector<Candidate> out;
  out.reserve(completions.size());
  for (size_t i = 0; i < completions.size(); ++i) {
    Candidate c;
    c.task_id = task.task_id;
    c.sample_index = start_index + static_cast<int>(i);
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_s%02d", c.sample_index);
    c.candidate_id = task.task_id + suffix;
    c.source = extract_code(completions[i], config.think_tag).value_or("");
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace fmv
