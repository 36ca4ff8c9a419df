// Acceptance gate for the voting harness. Each criterion prints one PASS or
// FAIL line; the process exits nonzero when any criterion fails. Library
// criteria link fmv_core directly, pipeline criteria drive the installed
// binary the same way a user would.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fmv/consensus.hpp"
#include "fmv/genclient.hpp"
#include "fmv/matrix.hpp"
#include "fmv/metrics.hpp"
#include "fmv/sandbox.hpp"
#include "fmv/simulator.hpp"
#include "fmv/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kCliBin = FMV_CLI_BIN;
const char* kRepoRoot = FMV_REPO_ROOT;

fs::path g_work;

class Criterion {
 public:
  explicit Criterion(std::string name) : name_(std::move(name)) {
    start_ = std::chrono::steady_clock::now();
  }

  void require(bool cond, const std::string& what) {
    if (!cond) failures_.push_back(what);
  }

  double elapsed_s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

  bool finish() {
    const bool ok = failures_.empty();
    std::printf("[%s] %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", name_.c_str(),
                elapsed_s(), ok ? "" : ": ",
                ok ? "" : failures_.front().c_str());
    std::fflush(stdout);
    return ok;
  }

 private:
  std::string name_;
  std::vector<std::string> failures_;
  std::chrono::steady_clock::time_point start_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

struct Cmd {
  int code = -1;
  std::string output;
};

Cmd run_cli(const std::string& args) {
  static int seq = 0;
  const fs::path log = g_work / ("cli" + std::to_string(seq++) + ".log");
  const std::string cmd =
      std::string(kCliBin) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, slurp(log)};
}

// Small random matrices exercising ties, invalid rows, and degenerate
// shapes. Invalid rows keep Ok cells elsewhere so they still vote in the
// pointwise tally.
fmv::ExecutionMatrix random_matrix(std::mt19937_64& rng) {
  static const char* kSymbols[3] = {"alpha", "beta", "gamma"};
  const size_t n = 1 + rng() % 16;
  const size_t k = 1 + rng() % 8;
  fmv::ExecutionMatrix m;
  m.task_id = "rand";
  for (size_t i = 0; i < n; ++i) {
    m.candidate_ids.push_back("c" + std::to_string(i));
    std::vector<fmv::ExecOutcome> row;
    const bool invalid = rng() % 5 == 0;
    const size_t bad = rng() % k;
    for (size_t j = 0; j < k; ++j) {
      fmv::ExecOutcome cell;
      if (invalid && j == bad) {
        cell.status = rng() % 2 ? fmv::ExecStatus::RuntimeError
                                : fmv::ExecStatus::Timeout;
        cell.exit_code = 1;
      } else {
        cell.status = fmv::ExecStatus::Ok;
        cell.output = kSymbols[rng() % 3];
      }
      row.push_back(cell);
    }
    m.grid.push_back(std::move(row));
  }
  return m;
}

struct BruteConsensus {
  std::optional<size_t> selected;
  std::map<size_t, int64_t> scores;
};

BruteConsensus brute_consensus(const fmv::ExecutionMatrix& m) {
  BruteConsensus b;
  const auto valid = fmv::valid_indices(m);
  int64_t best = -1;
  for (size_t i : valid) {
    int64_t s = 0;
    for (size_t j : valid) {
      if (j == i) continue;
      for (size_t kk = 0; kk < m.cols(); ++kk) {
        if (*m.grid[i][kk].output == *m.grid[j][kk].output) ++s;
      }
    }
    b.scores[i] = s;
    if (s > best) {
      best = s;
      b.selected = i;
    }
  }
  return b;
}

fmv::PointwiseTarget brute_targets(const fmv::ExecutionMatrix& m) {
  fmv::PointwiseTarget t;
  for (size_t kk = 0; kk < m.cols(); ++kk) {
    std::map<std::string, int> counts;
    int cast = 0;
    for (size_t i = 0; i < m.rows(); ++i) {
      if (m.grid[i][kk].ok()) {
        ++counts[*m.grid[i][kk].output];
        ++cast;
      }
    }
    std::optional<std::string> mode;
    int best = 0;
    for (const auto& [value, count] : counts) {
      if (count > best) {
        best = count;
        mode = value;
      }
    }
    t.target.push_back(mode);
    t.support.push_back(cast);
    t.vote_counts.push_back(std::move(counts));
  }
  return t;
}

bool rows_equal(const fmv::ExecutionMatrix& m, size_t a, size_t b) {
  for (size_t kk = 0; kk < m.cols(); ++kk) {
    if (*m.grid[a][kk].output != *m.grid[b][kk].output) return false;
  }
  return true;
}

// ---- criteria 1..3: voting math against brute force ----

bool criterion_consensus() {
  Criterion c("01 consensus selection matches brute force on 1000 matrices");
  std::mt19937_64 rng(0x5eed);
  for (int it = 0; it < 1000; ++it) {
    const auto m = random_matrix(rng);
    const auto got = fmv::select_consensus(m, 2);
    const auto want = brute_consensus(m);
    c.require(got.selected == want.selected,
              "selected index diverged at iteration " + std::to_string(it));
    c.require(got.scores == want.scores,
              "score map diverged at iteration " + std::to_string(it));
    if (got.selected) {
      c.require(*got.selected == *std::min_element(got.tie_group.begin(),
                                                   got.tie_group.end()),
                "tie did not resolve to the smallest row index");
    }
  }
  c.require(c.elapsed_s() < 10.0, "took longer than 10s");
  return c.finish();
}

bool criterion_targets() {
  Criterion c("02 pointwise targets match the brute-force per-input mode");
  std::mt19937_64 rng(0x7a12);
  for (int it = 0; it < 1000; ++it) {
    const auto m = random_matrix(rng);
    const auto got = fmv::pointwise_targets(m);
    const auto want = brute_targets(m);
    c.require(got.target == want.target,
              "target slots diverged at iteration " + std::to_string(it));
    c.require(got.support == want.support,
              "support counts diverged at iteration " + std::to_string(it));
    c.require(got.vote_counts == want.vote_counts,
              "vote tallies diverged at iteration " + std::to_string(it));
  }
  return c.finish();
}

bool criterion_rewards() {
  Criterion c("03 binary rewards keep their invariants");
  std::mt19937_64 rng(0x90d);
  for (int it = 0; it < 1000; ++it) {
    const auto m = random_matrix(rng);
    const auto cons = fmv::select_consensus(m);
    const auto joint = fmv::reward_joint(m, cons);
    c.require(joint.size() == m.rows(), "joint reward count mismatch");
    for (const auto& r : joint) {
      c.require(r.reward == 0.0 || r.reward == 1.0, "joint reward not binary");
      if (!m.row_valid(r.candidate_index)) {
        c.require(r.reward == 0.0, "invalid row earned a joint reward");
      }
      if (!cons.selected) {
        c.require(r.reward == 0.0, "reward without consensus");
      } else if (m.row_valid(r.candidate_index)) {
        const bool agrees = rows_equal(m, r.candidate_index, *cons.selected);
        c.require(r.reward == (agrees ? 1.0 : 0.0),
                  "joint reward disagrees with row comparison");
      }
    }
    if (cons.selected) {
      c.require(joint[*cons.selected].reward == 1.0,
                "selected candidate not rewarded");
    }
    const auto targets = fmv::pointwise_targets(m);
    const bool all_undefined =
        std::none_of(targets.target.begin(), targets.target.end(),
                     [](const auto& s) { return s.has_value(); });
    for (const auto& r : fmv::reward_pointwise(m, targets)) {
      c.require(r.reward == 0.0 || r.reward == 1.0,
                "pointwise reward not binary");
      if (!m.row_valid(r.candidate_index) || all_undefined) {
        c.require(r.reward == 0.0, "pointwise reward on invalid input");
      }
      c.require(r.undefined_target == all_undefined,
                "undefined-target flag wrong");
    }
  }
  return c.finish();
}

// ---- criteria 4..5: ensemble scaling behavior ----

bool criterion_scaling_gain() {
  Criterion c("04 consensus beats mean accuracy as the ensemble grows");
  fmv::NoiseModel model;
  model.p_correct = 0.4;
  model.p_invalid = 0.1;
  model.wrong_mode_count = 8;
  model.wrong_concentration = 0.2;
  model.k_inputs = 5;
  model.seed = 42;
  const std::vector<size_t> budgets = {1, 2, 4, 8, 16, 32, 64};
  const auto points =
      fmv::run_scaling_experiment(model, 200, 64, budgets, 16, 42, 1000, 4);
  c.require(points.size() == budgets.size(), "missing curve points");

  double mean_full = 0.0, fmv_at_32 = 0.0;
  for (const auto& p : points) {
    if (p.budget == 64) mean_full = p.mean_accuracy;
    if (p.budget == 32) fmv_at_32 = p.fmv_accuracy;
  }
  std::printf("    n=32 fmv %.4f vs mean %.4f\n", fmv_at_32, mean_full);
  c.require(fmv_at_32 >= mean_full + 0.10,
            "no ten-point gain at a budget of 32");
  for (size_t i = 0; i + 1 < points.size(); ++i) {
    const double band =
        2.0 * std::max(points[i].fmv_boot_se, points[i + 1].fmv_boot_se);
    c.require(points[i + 1].fmv_accuracy >= points[i].fmv_accuracy - band,
              "curve dips beyond two bootstrap bands after n=" +
                  std::to_string(points[i].budget));
  }
  c.require(c.elapsed_s() < 60.0, "took longer than 60s");
  return c.finish();
}

bool criterion_false_consensus() {
  Criterion c("05 a dominant wrong mode flips the gap at full budget");
  fmv::NoiseModel model;
  model.p_correct = 0.25;
  model.p_invalid = 0.1;
  model.wrong_mode_count = 8;
  model.wrong_concentration = 0.9;
  model.k_inputs = 5;
  model.seed = 42;
  const auto points =
      fmv::run_scaling_experiment(model, 200, 64, {64}, 16, 42, 200, 4);
  c.require(points.size() == 1, "missing curve point");
  std::printf("    n=64 fmv %.4f vs mean %.4f\n", points[0].fmv_accuracy,
              points[0].mean_accuracy);
  c.require(points[0].fmv_accuracy < points[0].mean_accuracy,
            "consensus should fall below mean accuracy here");
  return c.finish();
}

// ---- criterion 6: sandbox conformance ----

int count_marked_sleeps() {
  std::string needle = "sleep";
  needle.push_back('\0');
  needle += "31337";
  int n = 0;
  for (const auto& entry : fs::directory_iterator("/proc")) {
    const std::string name = entry.path().filename().string();
    if (name.find_first_not_of("0123456789") != std::string::npos) continue;
    std::error_code ec;
    if (!fs::is_directory(entry.path(), ec)) continue;
    const std::string cmdline = slurp(entry.path() / "cmdline");
    if (cmdline.find(needle) != std::string::npos) ++n;
  }
  return n;
}

bool criterion_sandbox() {
  Criterion c("06 sandbox enforces limits and leaves no orphans");
  fmv::ResourceLimits limits;

  limits.wall_timeout_ms = 1000;
  auto out = fmv::run_candidate("import time\ntime.sleep(5)\nprint(1)\n",
                                "python3 {file}", "", limits);
  c.require(out.status == fmv::ExecStatus::Timeout, "sleeper not timed out");
  c.require(out.duration_ms >= 1000 && out.duration_ms <= 1500,
            "timeout duration " + std::to_string(out.duration_ms) +
                "ms outside [1000,1500]");

  limits = {};
  limits.max_output_bytes = 10 * 1024 * 1024;
  out = fmv::run_candidate(
      "import sys\nsys.stdout.write('x' * (11 * 1024 * 1024))\n",
      "python3 {file}", "", limits);
  c.require(out.status == fmv::ExecStatus::OutputTooLarge,
            "11MB of output slipped past a 10MB cap");

  limits = {};
  out = fmv::run_candidate("import sys\nsys.exit(3)\n", "python3 {file}", "",
                           limits);
  c.require(out.status == fmv::ExecStatus::RuntimeError,
            "nonzero exit not a runtime error");
  c.require(out.exit_code == std::optional<int>(3), "exit code not preserved");

  // Every candidate leaves a marked grandchild behind. Detached spawners
  // finish cleanly; spawners whose grandchild inherits stdout hold the pipe
  // open past the deadline, as do ones that simply sleep. The whole batch
  // must clean up after itself either way.
  const char* kDetached =
      "import subprocess\n"
      "subprocess.Popen(['sleep', '31337'], stdin=subprocess.DEVNULL,\n"
      "                 stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)\n"
      "print('ok')\n";
  const char* kPipeHolder =
      "import subprocess\n"
      "subprocess.Popen(['sleep', '31337'])\n"
      "print('ok')\n";
  const char* kSleeper =
      "import subprocess, time\n"
      "subprocess.Popen(['sleep', '31337'])\n"
      "time.sleep(30)\n";
  fmv::Task task;
  task.task_id = "orphans";
  task.prompt = "";
  task.test_inputs = {"x\n"};
  std::vector<fmv::Candidate> cands;
  for (int i = 0; i < 64; ++i) {
    fmv::Candidate cand;
    cand.candidate_id = "orphans_s" + std::to_string(i);
    cand.task_id = "orphans";
    cand.sample_index = i;
    cand.source = i % 3 == 0 ? kDetached : i % 3 == 1 ? kPipeHolder : kSleeper;
    cands.push_back(std::move(cand));
  }
  fmv::ExecPlan plan;
  plan.limits.wall_timeout_ms = 2000;
  plan.parallelism = 8;
  const auto matrix = fmv::build_matrix(task, cands, plan);
  for (size_t i = 0; i < matrix.rows(); ++i) {
    const auto expect = i % 3 == 0 ? fmv::ExecStatus::Ok
                                   : fmv::ExecStatus::Timeout;
    c.require(matrix.grid[i][0].status == expect,
              "row " + std::to_string(i) + " has the wrong status");
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  const int orphans = count_marked_sleeps();
  c.require(orphans == 0,
            std::to_string(orphans) + " marked sleep processes survived");
  return c.finish();
}

// ---- criteria 7 and 9: pipeline determinism and the frozen report ----

std::map<std::string, std::string> matrix_dir_bytes(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    if (p.extension() != ".json") continue;
    if (p.filename() == "manifest.json") continue;
    if (p.string().ends_with(".manifest.json")) continue;
    files[p.filename().string()] = slurp(p);
  }
  return files;
}

bool criterion_determinism() {
  Criterion c("07 reruns reproduce artifacts byte for byte");
  const std::string tasks = std::string(kRepoRoot) + "/data/mini/tasks.jsonl";
  const std::string cands =
      std::string(kRepoRoot) + "/data/mini/candidates.jsonl";
  const std::string base = "--workdir " + g_work.string() + " ";

  auto r1 = run_cli(base + "execute --tasks " + tasks + " --candidates " +
                    cands + " --out m1 --parallelism 1 --cache-dir exec-cache");
  c.require(r1.code == 0, "serial execute failed: " + r1.output);
  auto r2 = run_cli(base + "execute --tasks " + tasks + " --candidates " +
                    cands + " --out m2 --parallelism 8 --cache-dir exec-cache");
  c.require(r2.code == 0, "parallel execute failed: " + r2.output);
  if (r1.code == 0 && r2.code == 0) {
    const auto a = matrix_dir_bytes(g_work / "m1");
    const auto b = matrix_dir_bytes(g_work / "m2");
    c.require(!a.empty(), "no matrices written");
    c.require(a == b, "matrices differ between serial and 8-way runs");
  }

  auto e1 = run_cli(base + "evaluate --tasks " + tasks +
                    " --matrices m1 --out r1.json --seed 42");
  auto e2 = run_cli(base + "evaluate --tasks " + tasks +
                    " --matrices m1 --out r2.json --seed 42");
  c.require(e1.code == 0 && e2.code == 0, "evaluate failed");
  c.require(slurp(g_work / "r1.json") == slurp(g_work / "r2.json"),
            "evaluation reports differ between runs");
  return c.finish();
}

// ---- criterion 8: metric identities ----

bool criterion_metric_identities() {
  Criterion c("08 metric identities hold");
  fmv::NoiseModel model;
  const auto sims = fmv::simulate_tasks(model, 20, 8, 2);
  std::vector<fmv::Task> tasks;
  std::vector<fmv::ExecutionMatrix> matrices;
  std::vector<fmv::CurveInput> inputs;
  for (const auto& s : sims) {
    tasks.push_back(s.task);
    matrices.push_back(s.matrix);
    inputs.push_back({s.matrix, *s.task.oracle_outputs});
  }
  const auto report = fmv::build_report(tasks, matrices, 200, 42, 2);
  c.require(report.best_at_n >= report.mean_at_n,
            "best-of-n fell below mean accuracy");
  c.require(report.best_at_n >= report.fmv_accuracy - 1e-15,
            "consensus accuracy exceeded best-of-n");

  const auto single = fmv::scaling_curve(inputs, {1}, 8, 7, 50, 2);
  c.require(single.size() == 1 &&
                single[0].fmv_accuracy == single[0].mean_accuracy,
            "budget-1 consensus accuracy is not plain mean accuracy");

  const std::vector<double> constant(37, 0.25);
  c.require(fmv::bootstrap_error(constant, 500, 99) == 0.0,
            "bootstrap spread of a constant sample is not zero");
  return c.finish();
}

bool criterion_golden_report() {
  Criterion c("09 mini corpus report matches the frozen reference");
  const std::string tasks = std::string(kRepoRoot) + "/data/mini/tasks.jsonl";
  const std::string cands =
      std::string(kRepoRoot) + "/data/mini/candidates.jsonl";
  const std::string base = "--workdir " + g_work.string() + " ";

  auto ex = run_cli(base + "execute --tasks " + tasks + " --candidates " +
                    cands +
                    " --out m9 --parallelism 8 --cache-dir exec-cache");
  c.require(ex.code == 0, "execute failed: " + ex.output);
  auto ev = run_cli(base + "evaluate --tasks " + tasks +
                    " --matrices m9 --out report.json --resamples 1000 "
                    "--seed 42");
  c.require(ev.code == 0, "evaluate failed: " + ev.output);
  if (ev.code != 0) return c.finish();

  json got = json::parse(slurp(g_work / "report.json"));
  json want = json::parse(
      slurp(fs::path(kRepoRoot) / "data" / "mini" / "expected_report.json"));
  got.erase("run_id");
  want.erase("run_id");

  // Field-by-field with a 1e-12 ceiling on float drift; everything else
  // must be exact.
  std::function<void(const json&, const json&, const std::string&)> compare =
      [&](const json& a, const json& b, const std::string& path) {
        if (a.is_number() && b.is_number() && (a.is_number_float() ||
                                               b.is_number_float())) {
          const double da = a.get<double>(), db = b.get<double>();
          c.require(std::fabs(da - db) <= 1e-12,
                    path + " differs: " + a.dump() + " vs " + b.dump());
          return;
        }
        if (a.is_object() && b.is_object()) {
          c.require(a.size() == b.size(), path + " has extra or missing keys");
          for (auto it = b.begin(); it != b.end(); ++it) {
            if (!a.contains(it.key())) {
              c.require(false, path + "." + it.key() + " is missing");
              continue;
            }
            compare(a.at(it.key()), b.at(it.key()), path + "." + it.key());
          }
          return;
        }
        if (a.is_array() && b.is_array()) {
          c.require(a.size() == b.size(), path + " length differs");
          for (size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
            compare(a[i], b[i], path + "[" + std::to_string(i) + "]");
          }
          return;
        }
        c.require(a == b, path + " differs: " + a.dump() + " vs " + b.dump());
      };
  compare(got, want, "report");
  return c.finish();
}

// ---- criterion 10: generation client against a recording stub ----

struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::mutex mu;
  std::vector<std::string> bodies;

  explicit StubServer(std::string reply) {
    server.Post("/v1/chat/completions", [this, reply = std::move(reply)](
                                            const httplib::Request& req,
                                            httplib::Response& res) {
      {
        std::lock_guard<std::mutex> lock(mu);
        bodies.push_back(req.body);
      }
      res.status = 200;
      res.set_content(reply, "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~StubServer() {
    server.stop();
    thread.join();
  }
};

bool criterion_genclient() {
  Criterion c("10 generation client sends pinned defaults and extracts code");
  json reply = {{"choices", json::array()}};
  const std::vector<std::string> contents = {
      "Plan first.\n```python\nprint(1)\n```\ndone",
      "print(2)\n",
      "<think>\nlots of musing\n</think>\nprint(3)\n",
      "",
  };
  for (const auto& content : contents) {
    reply["choices"].push_back({{"message", {{"content", content}}}});
  }
  StubServer stub(reply.dump());

  fmv::SamplingConfig cfg;
  cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(stub.port) + "/v1";
  cfg.model_name = "stub-model";
  cfg.n_samples = 4;

  fmv::Task task;
  task.task_id = "demo";
  task.prompt = "write a program";
  task.test_inputs = {"1\n"};

  const auto cands = fmv::sample_candidates(cfg, task);
  c.require(stub.bodies.size() == 1, "expected a single batched request");
  if (!stub.bodies.empty()) {
    const json body = json::parse(stub.bodies.front());
    c.require(body.at("model") == "stub-model", "model name not forwarded");
    c.require(body.at("temperature") == 0.6, "temperature default drifted");
    c.require(body.at("top_p") == 0.95, "top_p default drifted");
    c.require(body.at("max_tokens") == 8192, "max_tokens default drifted");
    c.require(body.at("n") == 4, "batch size not requested");
    c.require(body.at("messages").size() == 1 &&
                  body.at("messages")[0].at("role") == "user" &&
                  body.at("messages")[0].at("content") == "write a program",
              "prompt message malformed");
  }

  c.require(cands.size() == 4, "wrong candidate count");
  if (cands.size() == 4) {
    c.require(cands[0].source == "print(1)", "fenced block not extracted");
    c.require(cands[1].source == "print(2)", "plain completion not kept");
    c.require(cands[2].source == "print(3)", "reasoning span not stripped");
    c.require(cands[3].source.empty(), "unusable completion not left empty");
    c.require(cands[0].candidate_id == "demo_s00" && cands[0].sample_index == 0,
              "sample indexing drifted");
  }
  return c.finish();
}

}  // namespace

int main() {
  char tmpl[] = "/tmp/fmv-accept-XXXXXX";
  if (!mkdtemp(tmpl)) {
    std::perror("mkdtemp");
    return 1;
  }
  g_work = tmpl;

  int failed = 0;
  failed += !criterion_consensus();
  failed += !criterion_targets();
  failed += !criterion_rewards();
  failed += !criterion_scaling_gain();
  failed += !criterion_false_consensus();
  failed += !criterion_sandbox();
  failed += !criterion_determinism();
  failed += !criterion_metric_identities();
  failed += !criterion_golden_report();
  failed += !criterion_genclient();

  if (failed == 0) {
    std::error_code ec;
    fs::remove_all(g_work, ec);
    std::printf("all criteria passed\n");
  } else {
    std::printf("%d criteria failed, artifacts kept in %s\n", failed,
                g_work.string().c_str());
  }
  return failed == 0 ? 0 : 1;
}
