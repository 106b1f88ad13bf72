// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "run_config.hpp"
#include "sipreward/analysis.hpp"
#include "sipreward/core.hpp"
#include "sipreward/errors.hpp"
#include "sipreward/grpo.hpp"
#include "sipreward/judge.hpp"
#include "sipreward/pairs.hpp"
#include "sipreward/scoring.hpp"
#include "sipreward/trajectory.hpp"

#ifndef SIPREWARD_VERSION_STRING
#define SIPREWARD_VERSION_STRING "0.0.0"
#endif

namespace sipreward::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Input {
  std::string name;
  fs::path path;
};

struct Context {
  RunConfig config;
  std::optional<fs::path> out_path;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

json provenance(const std::string& command, const RunConfig& cfg, const std::vector<Input>& inputs) {
  json in = json::object();
  for (const auto& i : inputs) {
    in[i.name] = {{"path", i.path.string()}, {"sha256", sha256_hex(read_text_file(i.path))}};
  }
  return {{"_provenance",
           {{"tool", "sipreward"},
            {"version", SIPREWARD_VERSION_STRING},
            {"command", command},
            {"config_digest", sha256_hex(cfg.tree.dump())},
            {"config", cfg.tree},
            {"inputs", in}}}};
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
    if (!f) throw DataError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

// Sends text to --out when given, else to the output stream.
void emit(const Context& ctx, const std::string& text) {
  if (ctx.out_path) {
    write_file(*ctx.out_path, text);
  } else {
    *ctx.out << text;
  }
}

// Human-readable companion output; only shown when the records went to a file.
void emit_table(const Context& ctx, const std::string& text) {
  if (ctx.out_path) *ctx.out << text;
}

struct JudgeStack {
  std::unique_ptr<JudgeBackend> backend;
  std::shared_ptr<JudgeCache> cache;
  std::unique_ptr<JudgeClient> client;
};

JudgeStack make_judge(const RunConfig& cfg) {
  JudgeStack s;
  switch (cfg.backend) {
    case RunConfig::Backend::None:
      throw ConfigError("no judge backend configured (use --mock-judge, --judge-endpoint, or JUDGE_BASE_URL)");
    case RunConfig::Backend::Mock:
      s.backend = mock_judge(cfg.mock_seed, cfg.mock);
      break;
    case RunConfig::Backend::Http:
      s.backend = std::make_unique<HttpJudgeBackend>(cfg.http);
      break;
  }
  if (cfg.cache_dir) s.cache = std::make_shared<JudgeCache>(fs::path(*cfg.cache_dir));
  s.client = std::make_unique<JudgeClient>(*s.backend, s.cache, cfg.client);
  return s;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct TrajectoryRecord {
  std::string trajectory_id;
  std::string instance_id;
  std::string text;
};

std::vector<TrajectoryRecord> load_trajectories(const fs::path& path) {
  std::vector<TrajectoryRecord> out;
  for_each_record(read_text_file(path), [&](const json& j, std::size_t line_no) {
    try {
      if (!j.is_object()) throw std::invalid_argument("record must be an object");
      for (const auto& [k, _] : j.items()) {
        if (k != "instance_id" && k != "trajectory_id" && k != "text") {
          throw std::invalid_argument("unknown key '" + k + "'");
        }
      }
      TrajectoryRecord r;
      r.instance_id = j.at("instance_id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.trajectory_id = j.value("trajectory_id", r.instance_id + "#" + std::to_string(out.size()));
      out.push_back(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw MalformedRecord(line_no, e.what());
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
  });
  return out;
}

std::map<std::string, const Instance*> index_by_id(const std::vector<Instance>& data) {
  std::map<std::string, const Instance*> m;
  for (const auto& inst : data) m.emplace(inst.id, &inst);
  return m;
}

const Instance& lookup(const std::map<std::string, const Instance*>& index, const std::string& id) {
  auto it = index.find(id);
  if (it == index.end()) throw UnknownInstance(id);
  return *it->second;
}

std::map<std::string, std::string> load_references(const fs::path& path) {
  std::map<std::string, std::string> refs;
  for_each_record(read_text_file(path), [&](const json& j, std::size_t line_no) {
    try {
      refs[j.at("instance_id").get<std::string>()] = j.at("rationale").get<std::string>();
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
  });
  return refs;
}

json mean_or_null(double sum, std::size_t n) { return n ? json(sum / static_cast<double>(n)) : json(nullptr); }

// ---- subcommands -----------------------------------------------------------

struct ScoreArgs {
  std::string dataset, trajectories, references;
  std::size_t step = 0;
};

int cmd_score(const Context& ctx, const ScoreArgs& a) {
  const RunConfig& cfg = ctx.config;
  const auto data = load_dataset(a.dataset);
  const auto index = index_by_id(data);
  const auto records = load_trajectories(a.trajectories);
  std::vector<Input> inputs = {{"dataset", a.dataset}, {"trajectories", a.trajectories}};

  std::map<std::string, std::string> refs;
  if (!a.references.empty()) {
    refs = load_references(a.references);
    inputs.push_back({"references", a.references});
  }
  for (const auto& r : records) lookup(index, r.instance_id);

  JudgeStack judge;
  ScoringContext sc;
  sc.length = cfg.length;
  sc.curriculum = cfg.curriculum;
  sc.mask = cfg.mask;
  sc.ngram_order = cfg.ngram_order;
  if (!refs.empty()) sc.references = &refs;
  if ((cfg.mask.structural || cfg.mask.content) && !records.empty()) {
    judge = make_judge(cfg);
    sc.client = judge.client.get();
  }

  std::vector<ScoredTrajectory> scored(records.size());
  parallel_for(records.size(), cfg.jobs, [&](std::size_t i) {
    scored[i] = score_trajectory(lookup(index, records[i].instance_id), parse_trajectory(records[i].text), a.step, sc);
  });

  std::string text = provenance("score", cfg, inputs).dump() + "\n";
  std::array<double, 6> sums{};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& s = scored[i];
    json row = {{"trajectory_id", records[i].trajectory_id},
                {"instance_id", records[i].instance_id},
                {"breakdown", breakdown_to_json(s.breakdown)}};
    if (s.stats) {
      row["length_tokens"] = s.stats->length_tokens;
      row["repetition_ratio"] = s.stats->repetition_ratio;
    }
    if (s.structural) {
      row["structural"] = {{"stage_present", s.structural->stage_present},
                           {"in_order", s.structural->in_order},
                           {"premature_conclusion", s.structural->premature_conclusion}};
    }
    if (s.content) {
      row["content"] = {{"tier", std::string(to_string(s.content->tier))}, {"clamped", s.content->clamped}};
    }
    text += row.dump() + "\n";
    const auto& b = s.breakdown;
    sums[0] += b.r_fmt;
    sums[1] += b.r_out;
    sums[2] += b.r_struct;
    sums[3] += b.r_content;
    sums[4] += b.r_len.value_or(0.0);
    sums[5] += b.r_total;
  }
  const std::size_t n = records.size();
  json summary = {{"count", n},
                  {"mean",
                   {{"r_fmt", mean_or_null(sums[0], n)},
                    {"r_out", mean_or_null(sums[1], n)},
                    {"r_struct", mean_or_null(sums[2], n)},
                    {"r_content", mean_or_null(sums[3], n)},
                    {"r_len", mean_or_null(sums[4], n)},
                    {"r_total", mean_or_null(sums[5], n)}}}};
  text += json{{"_summary", summary}}.dump() + "\n";
  emit(ctx, text);
  return kExitOk;
}

struct EvalArgs {
  std::string dataset, trajectories;
};

int cmd_eval(const Context& ctx, const EvalArgs& a) {
  const RunConfig& cfg = ctx.config;
  const auto data = load_dataset(a.dataset);
  const auto index = index_by_id(data);
  const auto records = load_trajectories(a.trajectories);

  std::string text = provenance("eval", cfg, {{"dataset", a.dataset}, {"trajectories", a.trajectories}}).dump() + "\n";
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_ability;  // correct, total
  std::size_t correct = 0;
  for (const auto& r : records) {
    const Instance& inst = lookup(index, r.instance_id);
    const auto t = parse_trajectory(r.text);
    const bool ok = outcome_reward(t, inst.answer) == 1.0;
    const std::size_t len = t.thinking ? default_tokenizer().split(*t.thinking).size() : 0;
    json row = eval_result_to_json({r.instance_id, ok, len});
    row["ability"] = std::string(to_string(inst.ability));
    row["predicted"] = t.answer_label ? json(std::string(1, *t.answer_label)) : json(nullptr);
    text += row.dump() + "\n";
    auto& [c, tot] = per_ability[std::string(to_string(inst.ability))];
    c += ok;
    ++tot;
    correct += ok;
  }
  json abilities = json::object();
  for (const auto& [name, ct] : per_ability) {
    abilities[name] = {{"accuracy", static_cast<double>(ct.first) / static_cast<double>(ct.second)},
                       {"count", ct.second}};
  }
  json summary = {{"count", records.size()},
                  {"accuracy", mean_or_null(static_cast<double>(correct), records.size())},
                  {"per_ability", abilities}};
  text += json{{"_summary", summary}}.dump() + "\n";
  emit(ctx, text);
  emit_table(ctx, summary.dump(2) + "\n");
  return kExitOk;
}

struct TrainArgs {
  std::string dataset, resume, out_dir;
};

Checkpoint load_checkpoint(const fs::path& path) {
  std::optional<Checkpoint> c;
  for_each_record(read_text_file(path), [&](const json& j, std::size_t) { c = checkpoint_from_json(j); });
  if (!c) throw DataError("checkpoint file " + path.string() + " has no checkpoint record");
  return *c;
}

int cmd_train_toy(const Context& ctx, const TrainArgs& a) {
  const RunConfig& cfg = ctx.config;
  if (a.out_dir.empty()) throw ConfigError("train-toy needs --out <directory>");
  const fs::path dir = a.out_dir;
  const auto data = load_dataset(a.dataset);
  std::vector<Input> inputs = {{"dataset", a.dataset}};

  DatasetSplit split;
  if (cfg.train_count) {
    split = split_dataset(data, *cfg.train_count, cfg.seed);
  } else {
    split.train = data;
  }

  TrainOptions opt;
  opt.mask = cfg.mask;
  opt.tag_style = cfg.tag_style;
  opt.fixed_template = cfg.fixed_template;
  opt.jobs = cfg.jobs;
  opt.checkpoint_every = cfg.checkpoint_every;
  if (!a.resume.empty()) {
    opt.resume = load_checkpoint(a.resume);
    inputs.push_back({"resume", a.resume});
  }
  const std::string header = provenance("train-toy", cfg, inputs).dump() + "\n";

  std::string metrics = header;
  opt.on_step = [&](const StepMetrics& m) { metrics += step_metrics_to_json(m).dump() + "\n"; };
  opt.on_checkpoint = [&](const Checkpoint& c) {
    write_file(dir / "checkpoint.jsonl", header + checkpoint_to_json(c).dump() + "\n");
  };

  JudgeStack judge;
  JudgeClient* client = nullptr;
  if (cfg.mask.structural || cfg.mask.content) {
    judge = make_judge(cfg);
    client = judge.client.get();
  }

  TrainingReport report;
  try {
    report = train_toy(split, cfg.grpo, cfg.curriculum, cfg.length, client, opt);
  } catch (const BackendError&) {
    write_file(dir / "metrics.jsonl", metrics);
    throw;
  }
  write_file(dir / "metrics.jsonl", metrics);

  json summary = {{"steps_run", report.metrics.size()},
                  {"train_accuracy", report.train_accuracy},
                  {"train_expected_accuracy", report.train_expected_accuracy}};
  *ctx.out << json{{"_summary", summary}}.dump() << "\n";
  return kExitOk;
}

struct PairsArgs {
  std::string segments;
};

int cmd_build_pairs(const Context& ctx, const PairsArgs& a) {
  const RunConfig& cfg = ctx.config;
  const auto segments = parse_segments(read_text_file(a.segments));
  const auto pairs = build_pairs(segments, cfg.pairs, cfg.seed);
  std::string text = provenance("build-pairs", cfg, {{"segments", a.segments}}).dump() + "\n";
  std::array<std::size_t, kPriorityCount> counts{};
  for (const auto& p : pairs) {
    text += pair_to_json(p).dump() + "\n";
    ++counts[static_cast<std::size_t>(p.priority)];
  }
  json by_priority = json::object();
  for (std::size_t p = 0; p < kPriorityCount; ++p) by_priority[std::string(to_string(static_cast<Priority>(p)))] = counts[p];
  const json summary = {{"count", pairs.size()}, {"per_priority", by_priority}};
  text += json{{"_summary", summary}}.dump() + "\n";
  emit(ctx, text);
  emit_table(ctx, summary.dump(2) + "\n");
  return kExitOk;
}

struct DensityArgs {
  std::string dataset;
  std::vector<std::string> trajectories;
  std::vector<std::string> labels;
  std::string segmentation = "quartile";
  std::string csv;
};

int cmd_density(const Context& ctx, const DensityArgs& a) {
  const RunConfig& cfg = ctx.config;
  if (!a.labels.empty() && a.labels.size() != a.trajectories.size()) {
    throw ConfigError("--label must be given once per --trajectories file");
  }
  const Segmentation seg = parse_segmentation(a.segmentation);
  const auto data = load_dataset(a.dataset);
  const auto index = index_by_id(data);
  JudgeStack judge;
  if (seg == Segmentation::Judge) judge = make_judge(cfg);

  std::vector<Input> inputs = {{"dataset", a.dataset}};
  std::vector<DensityReport> reports;
  for (std::size_t f = 0; f < a.trajectories.size(); ++f) {
    inputs.push_back({"trajectories[" + std::to_string(f) + "]", a.trajectories[f]});
    const auto records = load_trajectories(a.trajectories[f]);
    std::vector<Instance> insts;
    std::vector<ParsedTrajectory> traces;
    for (const auto& r : records) {
      insts.push_back(lookup(index, r.instance_id));
      traces.push_back(parse_trajectory(r.text));
    }
    const std::string label = a.labels.empty() ? fs::path(a.trajectories[f]).stem().string() : a.labels[f];
    reports.push_back(density_report(insts, traces, seg, judge.client.get(), label));
  }
  std::string text = provenance("analyze density", cfg, inputs).dump() + "\n";
  for (const auto& r : reports) text += density_to_json(r).dump() + "\n";
  emit(ctx, text);
  if (!a.csv.empty()) write_file(a.csv, density_csv(reports));
  emit_table(ctx, density_table(reports));
  return kExitOk;
}

int cmd_stages(const Context& ctx, const std::string& records_path) {
  const auto records = parse_stage_records(read_text_file(records_path));
  const auto summary = stage_audit_aggregate(records);
  std::string text = provenance("analyze stages", ctx.config, {{"records", records_path}}).dump() + "\n";
  text += stage_summary_to_json(summary).dump() + "\n";
  emit(ctx, text);
  emit_table(ctx, stage_table(summary));
  return kExitOk;
}

int cmd_robustness(const Context& ctx, const std::string& original, const std::string& perturbed) {
  const auto o = parse_eval_results(read_text_file(original));
  const auto p = parse_eval_results(read_text_file(perturbed));
  const auto result = robustness_study(align_results(o, p));
  std::string text =
      provenance("analyze robustness", ctx.config, {{"original", original}, {"perturbed", perturbed}}).dump() + "\n";
  text += perturbation_to_json(result).dump() + "\n";
  emit(ctx, text);
  emit_table(ctx, perturbation_table(result));
  return kExitOk;
}

int cmd_perturb(const Context& ctx, const std::string& dataset, const std::string& distractors) {
  const auto data = load_dataset(dataset);
  const auto index = index_by_id(data);
  const auto sets = parse_distractor_sets(read_text_file(distractors));
  std::vector<Instance> out;
  for (const auto& s : sets) out.push_back(perturb_instance(lookup(index, s.id), s.distractors));
  std::string text =
      provenance("perturb", ctx.config, {{"dataset", dataset}, {"distractors", distractors}}).dump() + "\n";
  text += serialize_dataset(out);
  emit(ctx, text);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reward stack, toy GRPO trainer, preference pairs, and trajectory diagnostics", "sipreward"};
  app.set_version_flag("--version", SIPREWARD_VERSION_STRING);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, judge_endpoint, judge_model, cache_dir, out_path;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool mock = false, verbose = false;
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  auto* jobs_opt = app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  auto* endpoint_opt = app.add_option("--judge-endpoint", judge_endpoint, "Chat-completion base URL");
  auto* model_opt = app.add_option("--judge-model", judge_model, "Judge model name");
  app.add_flag("--mock-judge", mock, "Use the deterministic offline judge");
  auto* cache_opt = app.add_option("--cache-dir", cache_dir, "Directory for cached judge replies");
  app.add_option("--out", out_path, "Output file (directory for train-toy)");
  app.add_flag("-v,--verbose", verbose, "Print the resolved configuration and its sources");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score trajectories with the composite reward");
  score_cmd->add_option("--dataset", score.dataset)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--trajectories", score.trajectories)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--step", score.step, "Training step for the curriculum weights");
  score_cmd->add_option("--references", score.references, "Reference rationales by instance id")
      ->check(CLI::ExistingFile);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Answer accuracy overall and per ability");
  eval_cmd->add_option("--dataset", eval.dataset)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--trajectories", eval.trajectories)->required()->check(CLI::ExistingFile);

  TrainArgs train;
  std::size_t steps = 0;
  auto* train_cmd = app.add_subcommand("train-toy", "Run GRPO on the tabular toy policy");
  train_cmd->add_option("--dataset", train.dataset)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", train.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  auto* steps_opt = train_cmd->add_option("--steps", steps, "Total optimisation steps");

  PairsArgs pairs;
  std::size_t target = 0;
  bool cross_tier = false;
  auto* pairs_cmd = app.add_subcommand("build-pairs", "Build tiered preference pairs from scored segments");
  pairs_cmd->add_option("--segments", pairs.segments)->required()->check(CLI::ExistingFile);
  auto* target_opt = pairs_cmd->add_option("--target", target, "Overall number of pairs to keep");
  pairs_cmd->add_flag("--p4-cross-tier", cross_tier, "Allow length pairs across tiers");

  auto* analyze_cmd = app.add_subcommand("analyze", "Trajectory diagnostics");
  analyze_cmd->require_subcommand(1);
  DensityArgs density;
  auto* density_cmd = analyze_cmd->add_subcommand("density", "Option mentions per reasoning stage");
  density_cmd->add_option("--dataset", density.dataset)->required()->check(CLI::ExistingFile);
  density_cmd->add_option("--trajectories", density.trajectories)->required()->check(CLI::ExistingFile);
  density_cmd->add_option("--label", density.labels, "Report label per trajectory file");
  density_cmd->add_option("--segmentation", density.segmentation)->check(CLI::IsMember({"quartile", "judge"}));
  density_cmd->add_option("--csv", density.csv, "Also write plot-ready CSV here");
  std::string stage_records;
  auto* stages_cmd = analyze_cmd->add_subcommand("stages", "Aggregate per-stage audit records");
  stages_cmd->add_option("--records", stage_records)->required()->check(CLI::ExistingFile);
  std::string original, perturbed;
  auto* robust_cmd = analyze_cmd->add_subcommand("robustness", "Compare original and perturbed eval results");
  robust_cmd->add_option("--original", original)->required()->check(CLI::ExistingFile);
  robust_cmd->add_option("--perturbed", perturbed)->required()->check(CLI::ExistingFile);

  std::string perturb_dataset, distractors;
  auto* perturb_cmd = app.add_subcommand("perturb", "Insert distractor sentences into stories");
  perturb_cmd->add_option("--dataset", perturb_dataset)->required()->check(CLI::ExistingFile);
  perturb_cmd->add_option("--distractors", distractors)->required()->check(CLI::ExistingFile);

  std::vector<std::string> argv_store = {"sipreward"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    std::vector<ConfigLayer> layers;
    if (!config_path.empty()) {
      json file;
      try {
        file = json::parse(read_text_file(config_path));
      } catch (const json::parse_error& e) {
        throw ConfigError("config file " + config_path + " is not valid JSON: " + e.what());
      }
      layers.push_back({"file", file});
    }
    layers.push_back({"env", env_layer()});
    json flags = json::object();
    if (seed_opt->count()) flags["seed"] = seed;
    if (jobs_opt->count()) flags["jobs"] = jobs;
    if (endpoint_opt->count()) flags["judge"]["endpoint"] = judge_endpoint;
    if (model_opt->count()) flags["judge"]["model"] = judge_model;
    if (mock) flags["judge"]["backend"] = "mock";
    if (cache_opt->count()) flags["judge"]["cache_dir"] = cache_dir;
    if (steps_opt->count()) flags["grpo"]["total_steps"] = steps;
    if (target_opt->count()) flags["pairs"]["target"] = target;
    if (cross_tier) flags["pairs"]["p4_cross_tier"] = true;
    layers.push_back({"flags", flags});

    const char* key = std::getenv("JUDGE_API_KEY");
    std::map<std::string, std::string> origins;
    Context ctx;
    ctx.config = resolve_config(layers, key ? key : "", verbose ? &origins : nullptr);
    ctx.out = &out;
    ctx.err = &err;
    if (!out_path.empty()) ctx.out_path = out_path;
    if (verbose) {
      for (const auto& [k, layer] : origins) {
        std::string ptr = "/" + k;
        std::replace(ptr.begin(), ptr.end(), '.', '/');
        err << k << " = " << ctx.config.tree.at(json::json_pointer(ptr)).dump() << "  [" << layer << "]\n";
      }
    }

    if (*score_cmd) return cmd_score(ctx, score);
    if (*eval_cmd) return cmd_eval(ctx, eval);
    if (*train_cmd) {
      train.out_dir = out_path;
      Context c2 = ctx;
      c2.out_path.reset();
      return cmd_train_toy(c2, train);
    }
    if (*pairs_cmd) return cmd_build_pairs(ctx, pairs);
    if (*density_cmd) return cmd_density(ctx, density);
    if (*stages_cmd) return cmd_stages(ctx, stage_records);
    if (*robust_cmd) return cmd_robustness(ctx, original, perturbed);
    if (*perturb_cmd) return cmd_perturb(ctx, perturb_dataset, distractors);
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const BackendError& e) {
    err << "error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace sipreward::cli
