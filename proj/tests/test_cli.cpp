#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <json.hpp>

#include "helpers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using testutil::read_file;
using testutil::TempDir;
using testutil::write_file;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const TempDir& tmp, const std::string& args) {
  const fs::path log = tmp.path() / "cli.log";
  const std::string cmd = std::string(FMV_CLI_BIN) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.output = read_file(log);
  return r;
}

// Two tiny tasks with one echo-style input each keep the subprocess cost low.
void write_micro_corpus(const fs::path& dir) {
  write_file(dir / "tasks.jsonl",
             R"({"task_id":"u1","prompt":"echo","test_inputs":["5\n"],"oracle_outputs":["5"]})"
             "\n"
             R"({"task_id":"u2","prompt":"double","test_inputs":["3\n"],"oracle_outputs":["6"]})"
             "\n");
  const char* echo = "import sys\\nsys.stdout.write(sys.stdin.read())";
  const char* dbl = "print(2 * int(input()))";
  const char* bad = "print(int(input()) + 1)";
  std::string cands;
  int i = 0;
  for (const char* src : {echo, echo, bad}) {
    cands += std::string(R"({"candidate_id":"u1_s0)") + std::to_string(i) +
             R"(","task_id":"u1","sample_index":)" + std::to_string(i) +
             R"(,"source":")" + src + "\"}\n";
    ++i;
  }
  i = 0;
  for (const char* src : {dbl, bad, dbl}) {
    cands += std::string(R"({"candidate_id":"u2_s0)") + std::to_string(i) +
             R"(","task_id":"u2","sample_index":)" + std::to_string(i) +
             R"(,"source":")" + src + "\"}\n";
    ++i;
  }
  write_file(dir / "candidates.jsonl", cands);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage problems exit with code one") {
  TempDir tmp;
  CHECK(run_cli(tmp, "").exit_code == 1);
  CHECK(run_cli(tmp, "--definitely-not-a-flag").exit_code == 1);
  CHECK(run_cli(tmp, "execute").exit_code == 1);
  CHECK(run_cli(tmp, "reward --matrices x --out y --mode sideways")
            .exit_code == 1);
  CHECK(run_cli(tmp, "--version").exit_code == 0);
}

TEST_CASE("pipeline runs end to end on a micro corpus") {
  TempDir tmp;
  write_micro_corpus(tmp.path());
  const std::string base = "--workdir " + tmp.path().string() + " ";

  auto exec = run_cli(tmp, base + "execute --tasks tasks.jsonl "
                               "--candidates candidates.jsonl --out matrices "
                               "--parallelism 2");
  CAPTURE(exec.output);
  REQUIRE(exec.exit_code == 0);
  CHECK(fs::exists(tmp.path() / "matrices" / "u1.json"));
  CHECK(fs::exists(tmp.path() / "matrices" / "manifest.json"));
  CHECK(fs::is_directory(tmp.path() / "cache"));

  auto vote = run_cli(tmp, base + "vote --matrices matrices "
                               "--out consensus.jsonl --targets-out targets.jsonl");
  CAPTURE(vote.output);
  REQUIRE(vote.exit_code == 0);
  {
    std::istringstream lines(read_file(tmp.path() / "consensus.jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
      const auto rec = json::parse(line);
      CHECK(rec.at("no_consensus") == false);
      CHECK(rec.at("selected_index").is_number());
      ++n;
    }
    CHECK(n == 2);
  }

  auto reward = run_cli(tmp, base + "reward --matrices matrices "
                                 "--out rewards.jsonl --mode joint");
  REQUIRE(reward.exit_code == 0);
  {
    const std::string text = read_file(tmp.path() / "rewards.jsonl");
    const auto rec = json::parse(text.substr(0, text.find('\n')));
    CHECK(rec.at("mode") == "joint");
    double sum = 0;
    for (const auto& r : rec.at("rewards")) sum += r.at("reward").get<double>();
    CHECK(sum == 2.0);
  }

  auto eval = run_cli(tmp, base + "evaluate --tasks tasks.jsonl "
                               "--matrices matrices --out report.json "
                               "--resamples 200");
  CAPTURE(eval.output);
  REQUIRE(eval.exit_code == 0);
  const auto report = json::parse(read_file(tmp.path() / "report.json"));
  CHECK(report.at("n_tasks_evaluated") == 2);
  CHECK(report.at("fmv_accuracy") == 1.0);
  CHECK(report.at("mean_at_n") == doctest::Approx(2.0 / 3.0));
  CHECK(report.at("best_at_n") == 1.0);
  CHECK(report.at("bootstrap").at("resamples") == 200);
  CHECK(report.at("per_task").size() == 2);

  auto eval2 = run_cli(tmp, base + "evaluate --tasks tasks.jsonl "
                                "--matrices matrices --out report2.json "
                                "--resamples 200");
  REQUIRE(eval2.exit_code == 0);
  CHECK(read_file(tmp.path() / "report.json") ==
        read_file(tmp.path() / "report2.json"));

  auto curve = run_cli(tmp, base + "curve --tasks tasks.jsonl "
                                "--matrices matrices --out curve.csv "
                                "--budgets 1,2,3 --trials 4 --resamples 50");
  CAPTURE(curve.output);
  REQUIRE(curve.exit_code == 0);
  const std::string csv = read_file(tmp.path() / "curve.csv");
  CHECK(csv.rfind("n,fmv_acc,mean_acc,spread\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  auto split = run_cli(tmp, base + "split --tasks tasks.jsonl "
                                "--train-out train.jsonl "
                                "--holdout-out holdout.jsonl");
  REQUIRE(split.exit_code == 0);
  CHECK(read_file(tmp.path() / "train.jsonl").find("task_id") !=
        std::string::npos);
}

TEST_CASE("tampered artifacts break the manifest chain") {
  TempDir tmp;
  write_micro_corpus(tmp.path());
  const std::string base = "--workdir " + tmp.path().string() + " ";
  REQUIRE(run_cli(tmp, base + "execute --tasks tasks.jsonl "
                           "--candidates candidates.jsonl --out matrices")
              .exit_code == 0);

  auto matrix = read_file(tmp.path() / "matrices" / "u1.json");
  matrix.replace(matrix.find("\"5\""), 3, "\"9\"");
  write_file(tmp.path() / "matrices" / "u1.json", matrix);

  auto vote = run_cli(tmp, base + "vote --matrices matrices --out c.jsonl");
  CHECK(vote.exit_code == 2);
  CHECK(vote.output.find("does not match its manifest") != std::string::npos);
}

TEST_CASE("data problems exit with code two") {
  TempDir tmp;
  write_file(tmp.path() / "tasks.jsonl", "{broken\n");
  write_file(tmp.path() / "candidates.jsonl", "");
  const std::string base = "--workdir " + tmp.path().string() + " ";
  const auto r = run_cli(tmp, base + "execute --tasks tasks.jsonl "
                                  "--candidates candidates.jsonl --out m");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("tasks.jsonl:1") != std::string::npos);

  CHECK(run_cli(tmp, base + "evaluate --tasks missing.jsonl --matrices m "
                         "--out r.json")
            .exit_code == 2);
}

TEST_CASE("infrastructure failures exit with code three") {
  TempDir tmp;
  write_micro_corpus(tmp.path());
  const std::string base = "--workdir " + tmp.path().string() + " ";
  const auto r = run_cli(tmp, base + "execute --tasks tasks.jsonl "
                                  "--candidates candidates.jsonl --out m "
                                  "--runner 'no-such-interpreter-zz {file}'");
  CHECK(r.exit_code == 3);
}

TEST_CASE("config files provide option defaults") {
  TempDir tmp;
  write_micro_corpus(tmp.path());
  write_file(tmp.path() / "fmv.toml",
             "[execute]\ntimeout-ms = 9999\nparallelism = 2\n");
  const std::string base = "--workdir " + tmp.path().string() + " ";
  const auto r = run_cli(tmp, "--config " + (tmp.path() / "fmv.toml").string() +
                                  " " + base +
                                  "execute --tasks tasks.jsonl "
                                  "--candidates candidates.jsonl --out matrices");
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);
  const auto manifest =
      json::parse(read_file(tmp.path() / "matrices" / "manifest.json"));
  CHECK(manifest.at("config").at("timeout_ms") == 9999);
  CHECK(manifest.at("config").at("parallelism") == 2);
  CHECK(manifest.at("stage") == "execute");
  CHECK(manifest.at("run_id").get<std::string>().size() == 16);
}

TEST_CASE("simulate writes a loadable corpus") {
  TempDir tmp;
  const std::string base = "--workdir " + tmp.path().string() + " ";
  const auto r = run_cli(tmp, base + "simulate --out-dir sim --n-tasks 4 "
                                  "--n-candidates 8 --k-inputs 3 "
                                  "--curve-out sim/curve.csv --budgets 1,4,8 "
                                  "--trials 3 --resamples 20");
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(tmp.path() / "sim" / "tasks.jsonl"));
  CHECK(fs::exists(tmp.path() / "sim" / "matrices" / "sim0000.json"));
  CHECK(fs::exists(tmp.path() / "sim" / "matrices" / "manifest.json"));
  const std::string csv = read_file(tmp.path() / "sim" / "curve.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  const auto eval = run_cli(tmp, base + "evaluate --tasks sim/tasks.jsonl "
                                     "--matrices sim/matrices "
                                     "--out sim/report.json --resamples 50");
  CAPTURE(eval.output);
  CHECK(eval.exit_code == 0);
}

}  // TEST_SUITE
