#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fmv/consensus.hpp"
#include "fmv/corpus.hpp"
#include "fmv/errors.hpp"
#include "fmv/genclient.hpp"
#include "fmv/manifest.hpp"
#include "fmv/matrix.hpp"
#include "fmv/metrics.hpp"
#include "fmv/sandbox.hpp"
#include "fmv/simulator.hpp"
#include "fmv/version.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct GlobalOpts {
  std::string workdir = ".";

  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : fs::path(workdir) / path;
  }
};

void emit_manifest(const std::string& stage, const ordered_json& config,
                   const std::vector<fmv::ArtifactRef>& inputs,
                   const std::vector<fs::path>& output_files,
                   const std::vector<fs::path>& attach_points) {
  fmv::RunManifest m;
  m.stage = stage;
  m.tool_version = fmv::kVersion;
  m.created_utc = fmv::utc_timestamp_now();
  m.config_json = config.dump();
  m.inputs = inputs;
  for (const auto& f : output_files) {
    m.outputs.push_back({f.filename().string(), fmv::sha256_file_hex(f)});
  }
  m.run_id = fmv::make_run_id(stage, m.config_json, m.inputs);
  for (const auto& a : attach_points) fmv::write_manifest(m, a);
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fmv::DataError("cannot write " + path.string());
  out << text;
}

std::vector<fmv::ExecutionMatrix> load_matrix_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw fmv::DataError("matrix directory not found: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    if (!entry.is_regular_file() || p.extension() != ".json") continue;
    if (p.filename() == "manifest.json") continue;
    if (p.string().ends_with(".manifest.json")) continue;
    files.push_back(p);
  }
  if (files.empty()) {
    throw fmv::DataError("no matrices in " + dir.string());
  }
  std::sort(files.begin(), files.end());
  std::vector<fmv::ExecutionMatrix> matrices;
  matrices.reserve(files.size());
  for (const auto& f : files) matrices.push_back(fmv::load_matrix(f));
  std::sort(matrices.begin(), matrices.end(),
            [](const fmv::ExecutionMatrix& a, const fmv::ExecutionMatrix& b) {
              return a.task_id < b.task_id;
            });
  return matrices;
}

std::map<std::string, const fmv::Task*> task_index(
    const std::vector<fmv::Task>& tasks) {
  std::map<std::string, const fmv::Task*> by_id;
  for (const auto& t : tasks) by_id[t.task_id] = &t;
  return by_id;
}

// ---- generate ----

struct GenerateOpts {
  std::string tasks;
  std::string out;
  fmv::SamplingConfig sampling;
};

void run_generate(const GlobalOpts& g, const GenerateOpts& o) {
  const fs::path tasks_path = g.resolve(o.tasks);
  const fs::path out_path = g.resolve(o.out);
  const auto tasks_ref = fmv::check_input_artifact(tasks_path);
  const std::vector<fmv::Task> tasks = fmv::load_tasks(tasks_path);

  std::map<std::string, std::vector<fmv::Candidate>> existing;
  if (fs::exists(out_path)) {
    existing = fmv::load_corpus(tasks_path, out_path).candidates_by_task;
  }

  std::vector<fmv::Candidate> all;
  int fresh = 0;
  for (const auto& task : tasks) {
    std::vector<fmv::Candidate> rows = existing[task.task_id];
    const int have = static_cast<int>(rows.size());
    if (have < o.sampling.n_samples) {
      fmv::SamplingConfig cfg = o.sampling;
      cfg.n_samples = o.sampling.n_samples - have;
      auto more = fmv::sample_candidates(cfg, task, have);
      fresh += static_cast<int>(more.size());
      rows.insert(rows.end(), more.begin(), more.end());
    }
    all.insert(all.end(), rows.begin(), rows.end());
  }
  fmv::save_candidates_jsonl(all, out_path);

  ordered_json config;
  config["endpoint"] = o.sampling.endpoint_url;
  config["model"] = o.sampling.model_name;
  config["temperature"] = o.sampling.temperature;
  config["top_p"] = o.sampling.top_p;
  config["max_tokens"] = o.sampling.max_new_tokens;
  config["n_samples"] = o.sampling.n_samples;
  config["think_tag"] = o.sampling.think_tag;
  config["prompt_template"] = o.sampling.prompt_template;
  emit_manifest("generate", config, {tasks_ref}, {out_path}, {out_path});
  std::cout << "generated " << fresh << " new candidates (" << all.size()
            << " total) into " << out_path.string() << "\n";
}

// ---- execute ----

struct ExecuteOpts {
  std::string tasks;
  std::string candidates;
  std::string out;
  std::string runner = "python3 {file}";
  int64_t timeout_ms = 6000;
  int64_t max_output_bytes = 1 << 20;
  int64_t max_memory_bytes = 0;
  int parallelism = 1;
  std::string cache_dir;
  bool no_cache = false;
};

void run_execute(const GlobalOpts& g, const ExecuteOpts& o) {
  const fs::path tasks_path = g.resolve(o.tasks);
  const fs::path cands_path = g.resolve(o.candidates);
  const fs::path out_dir = g.resolve(o.out);
  const auto tasks_ref = fmv::check_input_artifact(tasks_path);
  const auto cands_ref = fmv::check_input_artifact(cands_path);
  const fmv::Corpus corpus = fmv::load_corpus(tasks_path, cands_path);

  fmv::ExecPlan plan;
  plan.runner_command = o.runner;
  plan.limits.wall_timeout_ms = o.timeout_ms;
  plan.limits.max_output_bytes = o.max_output_bytes;
  if (o.max_memory_bytes > 0) plan.limits.max_memory_bytes = o.max_memory_bytes;
  plan.parallelism = o.parallelism;
  if (!o.no_cache) {
    plan.cache_dir = o.cache_dir.empty() ? fs::path(g.workdir) / "cache"
                                         : g.resolve(o.cache_dir);
  }

  fs::create_directories(out_dir);
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      fs::remove(entry.path());
    }
  }

  std::vector<fs::path> written;
  for (const auto& task : corpus.tasks) {
    auto it = corpus.candidates_by_task.find(task.task_id);
    if (it == corpus.candidates_by_task.end()) {
      throw fmv::DataError("task " + task.task_id + " has no candidates");
    }
    const fmv::ExecutionMatrix m = fmv::build_matrix(task, it->second, plan);
    const fs::path out_file = out_dir / (task.task_id + ".json");
    fmv::save_matrix(m, out_file);
    written.push_back(out_file);
  }

  ordered_json config;
  config["runner"] = o.runner;
  config["timeout_ms"] = o.timeout_ms;
  config["max_output_bytes"] = o.max_output_bytes;
  if (o.max_memory_bytes > 0) config["max_memory_bytes"] = o.max_memory_bytes;
  config["parallelism"] = o.parallelism;
  config["cache"] = !o.no_cache;
  emit_manifest("execute", config, {tasks_ref, cands_ref}, written, {out_dir});
  std::cout << "executed " << corpus.tasks.size() << " tasks into "
            << out_dir.string() << "\n";
}

// ---- vote ----

struct VoteOpts {
  std::string matrices;
  std::string out;
  std::string targets_out;
  int threads = 1;
};

void run_vote(const GlobalOpts& g, const VoteOpts& o) {
  const fs::path dir = g.resolve(o.matrices);
  const fs::path out_path = g.resolve(o.out);
  const auto dir_ref = fmv::check_input_artifact(dir);
  const auto matrices = load_matrix_dir(dir);

  std::string consensus_lines;
  std::string target_lines;
  int no_consensus = 0;
  for (const auto& m : matrices) {
    const fmv::ConsensusResult c = fmv::select_consensus(m, o.threads);
    if (!c.selected) ++no_consensus;
    consensus_lines += fmv::consensus_to_jsonl_record(m.task_id, m, c);
    consensus_lines.push_back('\n');
    if (!o.targets_out.empty()) {
      target_lines +=
          fmv::target_to_jsonl_record(m.task_id, fmv::pointwise_targets(m));
      target_lines.push_back('\n');
    }
  }
  write_text_file(out_path, consensus_lines);

  ordered_json config;
  config["threads"] = o.threads;
  std::vector<fs::path> outputs = {out_path};
  if (!o.targets_out.empty()) {
    const fs::path targets_path = g.resolve(o.targets_out);
    write_text_file(targets_path, target_lines);
    outputs.push_back(targets_path);
    emit_manifest("vote", config, {dir_ref}, outputs, {out_path, targets_path});
  } else {
    emit_manifest("vote", config, {dir_ref}, outputs, {out_path});
  }
  std::cout << "voted on " << matrices.size() << " tasks, " << no_consensus
            << " without consensus\n";
}

// ---- reward ----

struct RewardOpts {
  std::string matrices;
  std::string out;
  std::string mode = "joint";
  int threads = 1;
};

void run_reward(const GlobalOpts& g, const RewardOpts& o) {
  const fs::path dir = g.resolve(o.matrices);
  const fs::path out_path = g.resolve(o.out);
  const auto dir_ref = fmv::check_input_artifact(dir);
  const auto matrices = load_matrix_dir(dir);

  std::string lines;
  for (const auto& m : matrices) {
    std::vector<fmv::RewardRecord> rewards;
    if (o.mode == "joint") {
      rewards = fmv::reward_joint(m, fmv::select_consensus(m, o.threads));
    } else {
      rewards = fmv::reward_pointwise(m, fmv::pointwise_targets(m));
    }
    lines += fmv::rewards_to_jsonl_record(m.task_id, m, rewards);
    lines.push_back('\n');
  }
  write_text_file(out_path, lines);

  ordered_json config;
  config["mode"] = o.mode;
  config["threads"] = o.threads;
  emit_manifest("reward", config, {dir_ref}, {out_path}, {out_path});
  std::cout << "wrote " << o.mode << " rewards for " << matrices.size()
            << " tasks\n";
}

// ---- evaluate ----

struct EvaluateOpts {
  std::string tasks;
  std::string matrices;
  std::string out;
  int resamples = 1000;
  uint64_t seed = 42;
  int threads = 1;
};

void run_evaluate(const GlobalOpts& g, const EvaluateOpts& o) {
  const fs::path tasks_path = g.resolve(o.tasks);
  const fs::path dir = g.resolve(o.matrices);
  const fs::path out_path = g.resolve(o.out);
  const auto tasks_ref = fmv::check_input_artifact(tasks_path);
  const auto dir_ref = fmv::check_input_artifact(dir);

  const std::vector<fmv::Task> tasks = fmv::load_tasks(tasks_path);
  const auto matrices = load_matrix_dir(dir);
  const fmv::BenchmarkReport report =
      fmv::build_report(tasks, matrices, o.resamples, o.seed, o.threads);

  ordered_json config;
  config["resamples"] = o.resamples;
  config["seed"] = o.seed;
  const std::string run_id =
      fmv::make_run_id("evaluate", config.dump(), {tasks_ref, dir_ref});
  write_text_file(out_path, fmv::report_to_json(report, run_id) + "\n");
  emit_manifest("evaluate", config, {tasks_ref, dir_ref}, {out_path},
                {out_path});
  std::cout << fmv::report_to_table(report);
}

// ---- curve ----

struct CurveOpts {
  std::string tasks;
  std::string matrices;
  std::string out;
  std::vector<size_t> budgets = {1, 2, 4, 8, 16, 32, 64};
  int trials = 16;
  uint64_t seed = 42;
  int resamples = 1000;
  int threads = 1;
};

std::vector<fmv::CurveInput> curve_inputs(
    const std::vector<fmv::Task>& tasks,
    std::vector<fmv::ExecutionMatrix> matrices) {
  const auto by_id = task_index(tasks);
  std::vector<fmv::CurveInput> inputs;
  for (auto& m : matrices) {
    auto it = by_id.find(m.task_id);
    if (it == by_id.end()) {
      throw fmv::DataError("matrix for unknown task " + m.task_id);
    }
    if (!it->second->oracle_outputs) {
      throw fmv::DataError("task " + m.task_id +
                           " has no oracle outputs for the curve");
    }
    inputs.push_back({std::move(m), *it->second->oracle_outputs});
  }
  return inputs;
}

void run_curve(const GlobalOpts& g, const CurveOpts& o) {
  const fs::path tasks_path = g.resolve(o.tasks);
  const fs::path dir = g.resolve(o.matrices);
  const fs::path out_path = g.resolve(o.out);
  const auto tasks_ref = fmv::check_input_artifact(tasks_path);
  const auto dir_ref = fmv::check_input_artifact(dir);

  const std::vector<fmv::Task> tasks = fmv::load_tasks(tasks_path);
  auto inputs = curve_inputs(tasks, load_matrix_dir(dir));

  size_t pool = SIZE_MAX;
  for (const auto& in : inputs) pool = std::min(pool, in.matrix.rows());
  for (size_t b : o.budgets) {
    if (b == 0 || b > pool) {
      throw fmv::DataError("budget " + std::to_string(b) +
                           " exceeds the smallest candidate pool (" +
                           std::to_string(pool) + ")");
    }
  }

  const auto points = fmv::scaling_curve(inputs, o.budgets, o.trials, o.seed,
                                         o.resamples, o.threads);
  write_text_file(out_path, fmv::curve_to_csv(points));

  ordered_json config;
  config["budgets"] = o.budgets;
  config["trials"] = o.trials;
  config["seed"] = o.seed;
  config["resamples"] = o.resamples;
  emit_manifest("curve", config, {tasks_ref, dir_ref}, {out_path}, {out_path});
  for (const auto& p : points) {
    std::printf("n=%-3zu fmv %.4f mean %.4f spread %.4f\n", p.budget,
                p.fmv_accuracy, p.mean_accuracy, p.spread);
  }
}

// ---- split ----

struct SplitOpts {
  std::string tasks;
  std::string train_out;
  std::string holdout_out;
  uint64_t seed = 42;
};

void run_split(const GlobalOpts& g, const SplitOpts& o) {
  const fs::path tasks_path = g.resolve(o.tasks);
  const fs::path train_path = g.resolve(o.train_out);
  const fs::path holdout_path = g.resolve(o.holdout_out);
  const auto tasks_ref = fmv::check_input_artifact(tasks_path);

  const std::vector<fmv::Task> tasks = fmv::load_tasks(tasks_path);
  const fmv::HoldoutSplit split = fmv::split_holdout(tasks, o.seed);
  const auto by_id = task_index(tasks);

  auto subset = [&](const std::vector<std::string>& ids) {
    std::vector<fmv::Task> out;
    for (const auto& id : ids) out.push_back(*by_id.at(id));
    return out;
  };
  fmv::save_tasks_jsonl(subset(split.train_ids), train_path);
  fmv::save_tasks_jsonl(subset(split.holdout_ids), holdout_path);

  ordered_json config;
  config["seed"] = o.seed;
  emit_manifest("split", config, {tasks_ref}, {train_path, holdout_path},
                {train_path, holdout_path});
  std::cout << "split " << tasks.size() << " tasks into "
            << split.train_ids.size() << " train / "
            << split.holdout_ids.size() << " holdout\n";
}

// ---- simulate ----

struct SimulateOpts {
  std::string out_dir;
  int n_tasks = 100;
  int n_candidates = 64;
  fmv::NoiseModel model;
  std::string curve_out;
  std::vector<size_t> budgets = {1, 2, 4, 8, 16, 32, 64};
  int trials = 16;
  uint64_t curve_seed = 42;
  int resamples = 1000;
  int threads = 1;
};

void run_simulate(const GlobalOpts& g, const SimulateOpts& o) {
  const fs::path out_dir = g.resolve(o.out_dir);
  const fs::path matrices_dir = out_dir / "matrices";
  fs::create_directories(matrices_dir);

  const auto sims = fmv::simulate_tasks(o.model, o.n_tasks, o.n_candidates,
                                        o.threads);
  std::vector<fmv::Task> tasks;
  std::vector<fs::path> matrix_files;
  for (const auto& s : sims) {
    tasks.push_back(s.task);
    const fs::path f = matrices_dir / (s.task.task_id + ".json");
    fmv::save_matrix(s.matrix, f);
    matrix_files.push_back(f);
  }
  const fs::path tasks_path = out_dir / "tasks.jsonl";
  fmv::save_tasks_jsonl(tasks, tasks_path);

  ordered_json config;
  config["n_tasks"] = o.n_tasks;
  config["n_candidates"] = o.n_candidates;
  config["p_correct"] = o.model.p_correct;
  config["p_invalid"] = o.model.p_invalid;
  config["wrong_modes"] = o.model.wrong_mode_count;
  config["wrong_concentration"] = o.model.wrong_concentration;
  config["k_inputs"] = o.model.k_inputs;
  config["per_cell_corruption"] = o.model.per_cell_corruption;
  config["seed"] = o.model.seed;
  emit_manifest("simulate", config, {}, {tasks_path}, {tasks_path});
  emit_manifest("simulate", config, {}, matrix_files, {matrices_dir});

  if (!o.curve_out.empty()) {
    std::vector<fmv::CurveInput> inputs;
    for (const auto& s : sims) {
      inputs.push_back({s.matrix, *s.task.oracle_outputs});
    }
    const auto points = fmv::scaling_curve(inputs, o.budgets, o.trials,
                                           o.curve_seed, o.resamples,
                                           o.threads);
    const fs::path curve_path = g.resolve(o.curve_out);
    write_text_file(curve_path, fmv::curve_to_csv(points));
    ordered_json curve_config = config;
    curve_config["budgets"] = o.budgets;
    curve_config["trials"] = o.trials;
    curve_config["curve_seed"] = o.curve_seed;
    curve_config["resamples"] = o.resamples;
    emit_manifest("simulate-curve", curve_config, {}, {curve_path},
                  {curve_path});
    for (const auto& p : points) {
      std::printf("n=%-3zu fmv %.4f mean %.4f spread %.4f\n", p.budget,
                  p.fmv_accuracy, p.mean_accuracy, p.spread);
    }
  }
  std::cout << "simulated " << o.n_tasks << " tasks x " << o.n_candidates
            << " candidates into " << out_dir.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  GlobalOpts global;
  CLI::App app{"functional majority voting over program ensembles"};
  app.set_version_flag("--version", fmv::kVersion);
  app.set_config("--config", "", "read option defaults from a TOML file");
  app.add_option("--workdir", global.workdir,
                 "base directory for relative paths and the default cache");
  app.require_subcommand(1);

  GenerateOpts gen;
  auto* cgen = app.add_subcommand("generate",
                                  "sample candidate programs from a model");
  cgen->add_option("--tasks", gen.tasks, "tasks.jsonl")->required();
  cgen->add_option("--out", gen.out, "candidates.jsonl to write")->required();
  cgen->add_option("--endpoint", gen.sampling.endpoint_url,
                   "chat completions base url")->required();
  cgen->add_option("--model", gen.sampling.model_name, "model name")
      ->required();
  cgen->add_option("--temperature", gen.sampling.temperature, "");
  cgen->add_option("--top-p", gen.sampling.top_p, "");
  cgen->add_option("--max-tokens", gen.sampling.max_new_tokens, "");
  cgen->add_option("--n", gen.sampling.n_samples, "samples per task");
  cgen->add_option("--request-timeout-ms", gen.sampling.request_timeout_ms, "");
  cgen->add_option("--retries", gen.sampling.max_retries, "");
  cgen->add_option("--think-tag", gen.sampling.think_tag,
                   "reasoning tag stripped from unfenced completions");
  cgen->add_option("--prompt-template", gen.sampling.prompt_template,
                   "{prompt} expands to the task prompt");
  cgen->callback([&] { run_generate(global, gen); });

  ExecuteOpts exe;
  auto* cexe = app.add_subcommand("execute",
                                  "run candidates on task inputs");
  cexe->add_option("--tasks", exe.tasks, "tasks.jsonl")->required();
  cexe->add_option("--candidates", exe.candidates, "candidates.jsonl")
      ->required();
  cexe->add_option("--out", exe.out, "matrix directory to write")->required();
  cexe->add_option("--runner", exe.runner, "command, {file} is the program");
  cexe->add_option("--timeout-ms", exe.timeout_ms, "");
  cexe->add_option("--max-output-bytes", exe.max_output_bytes, "");
  cexe->add_option("--max-memory-bytes", exe.max_memory_bytes,
                   "0 leaves memory unlimited");
  cexe->add_option("--parallelism", exe.parallelism, "");
  cexe->add_option("--cache-dir", exe.cache_dir,
                   "defaults to <workdir>/cache");
  cexe->add_flag("--no-cache", exe.no_cache, "");
  cexe->callback([&] { run_execute(global, exe); });

  VoteOpts vote;
  auto* cvote = app.add_subcommand("vote", "select consensus per task");
  cvote->add_option("--matrices", vote.matrices, "matrix directory")
      ->required();
  cvote->add_option("--out", vote.out, "consensus.jsonl to write")->required();
  cvote->add_option("--targets-out", vote.targets_out,
                    "also write pointwise targets");
  cvote->add_option("--threads", vote.threads, "");
  cvote->callback([&] { run_vote(global, vote); });

  RewardOpts reward;
  auto* crew = app.add_subcommand("reward", "derive binary rewards");
  crew->add_option("--matrices", reward.matrices, "matrix directory")
      ->required();
  crew->add_option("--out", reward.out, "rewards.jsonl to write")->required();
  crew->add_option("--mode", reward.mode, "joint or pointwise")
      ->check(CLI::IsMember({"joint", "pointwise"}));
  crew->add_option("--threads", reward.threads, "");
  crew->callback([&] { run_reward(global, reward); });

  EvaluateOpts eval;
  auto* ceval = app.add_subcommand("evaluate", "score against oracles");
  ceval->add_option("--tasks", eval.tasks, "tasks.jsonl with oracles")
      ->required();
  ceval->add_option("--matrices", eval.matrices, "matrix directory")
      ->required();
  ceval->add_option("--out", eval.out, "report.json to write")->required();
  ceval->add_option("--resamples", eval.resamples, "");
  ceval->add_option("--seed", eval.seed, "");
  ceval->add_option("--threads", eval.threads, "");
  ceval->callback([&] { run_evaluate(global, eval); });

  CurveOpts curve;
  auto* ccurve = app.add_subcommand("curve", "accuracy versus sample budget");
  ccurve->add_option("--tasks", curve.tasks, "tasks.jsonl with oracles")
      ->required();
  ccurve->add_option("--matrices", curve.matrices, "matrix directory")
      ->required();
  ccurve->add_option("--out", curve.out, "curve.csv to write")->required();
  ccurve->add_option("--budgets", curve.budgets, "")->delimiter(',');
  ccurve->add_option("--trials", curve.trials, "");
  ccurve->add_option("--seed", curve.seed, "");
  ccurve->add_option("--resamples", curve.resamples, "");
  ccurve->add_option("--threads", curve.threads, "");
  ccurve->callback([&] { run_curve(global, curve); });

  SplitOpts split;
  auto* csplit = app.add_subcommand("split", "seeded train/holdout split");
  csplit->add_option("--tasks", split.tasks, "tasks.jsonl")->required();
  csplit->add_option("--train-out", split.train_out, "")->required();
  csplit->add_option("--holdout-out", split.holdout_out, "")->required();
  csplit->add_option("--seed", split.seed, "");
  csplit->callback([&] { run_split(global, split); });

  SimulateOpts sim;
  auto* csim = app.add_subcommand("simulate", "synthetic ensembles");
  csim->add_option("--out-dir", sim.out_dir, "directory for tasks + matrices")
      ->required();
  csim->add_option("--n-tasks", sim.n_tasks, "");
  csim->add_option("--n-candidates", sim.n_candidates, "");
  csim->add_option("--p-correct", sim.model.p_correct, "");
  csim->add_option("--p-invalid", sim.model.p_invalid, "");
  csim->add_option("--wrong-modes", sim.model.wrong_mode_count, "");
  csim->add_option("--wrong-concentration", sim.model.wrong_concentration, "");
  csim->add_option("--k-inputs", sim.model.k_inputs, "");
  csim->add_option("--per-cell-corruption", sim.model.per_cell_corruption, "");
  csim->add_option("--seed", sim.model.seed, "");
  csim->add_option("--curve-out", sim.curve_out, "also write a scaling curve");
  csim->add_option("--budgets", sim.budgets, "")->delimiter(',');
  csim->add_option("--trials", sim.trials, "");
  csim->add_option("--curve-seed", sim.curve_seed, "");
  csim->add_option("--resamples", sim.resamples, "");
  csim->add_option("--threads", sim.threads, "");
  csim->callback([&] { run_simulate(global, sim); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const fmv::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
