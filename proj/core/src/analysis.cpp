// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include "sipreward/analysis.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sipreward/errors.hpp"

namespace sipreward {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kStageNames = {"encoding", "interpretation", "goal", "response"};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

void check_keys(const json& j, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw std::invalid_argument("record must be an object");
  for (const auto& [k, _] : j.items()) {
    if (!allowed.contains(k)) throw std::invalid_argument("unknown key '" + k + "'");
  }
}

template <typename T, typename Fn>
std::vector<T> parse_lines(std::string_view text, Fn&& from_json) {
  std::vector<T> out;
  for_each_record(text, [&](const json& j, std::size_t line_no) {
    try {
      out.push_back(from_json(j));
    } catch (const std::invalid_argument& e) {
      throw MalformedRecord(line_no, e.what());
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
  });
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

// ---- density ---------------------------------------------------------------

std::string_view to_string(Segmentation s) noexcept { return s == Segmentation::Quartile ? "quartile" : "judge"; }

Segmentation parse_segmentation(std::string_view s) {
  if (s == "quartile") return Segmentation::Quartile;
  if (s == "judge") return Segmentation::Judge;
  throw ConfigError("unknown segmentation '" + std::string(s) + "' (expected quartile or judge)");
}

DensityReport density_report(std::span<const Instance> instances, std::span<const ParsedTrajectory> traces,
                             Segmentation segmentation, JudgeClient* client, std::string label) {
  if (instances.size() != traces.size()) throw DataError("density_report: instance and trace counts differ");
  if (traces.empty()) throw EmptyInput("density_report needs at least one trajectory");
  if (segmentation == Segmentation::Judge && client == nullptr) {
    throw ConfigError("judge segmentation needs a judge backend");
  }
  DensityReport r;
  r.label = std::move(label);
  r.samples = traces.size();
  std::array<std::size_t, 4> sums{};
  std::size_t total = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (!traces[i].thinking) throw MissingThinking("trajectory for " + instances[i].id + " has no reasoning block");
    OptionMentionProfile p;
    if (segmentation == Segmentation::Judge) {
      const JudgeRequest req{JudgeKind::Segmentation, instances[i], traces[i], std::nullopt};
      p = count_option_mentions(traces[i], instances[i].options, segment_stages(req, *client));
    } else {
      p = count_option_mentions(traces[i], instances[i].options);
    }
    for (std::size_t q = 0; q < 4; ++q) sums[q] += p.per_quartile_counts[q];
    total += p.total;
  }
  const double n = static_cast<double>(r.samples);
  for (std::size_t q = 0; q < 4; ++q) r.mean_per_stage[q] = static_cast<double>(sums[q]) / n;
  r.mean_total = static_cast<double>(total) / n;
  return r;
}

json density_to_json(const DensityReport& r) {
  return {{"label", r.label}, {"mean_per_stage", r.mean_per_stage}, {"mean_total", r.mean_total},
          {"samples", r.samples}};
}

std::string density_table(std::span<const DensityReport> reports) {
  std::string out = fmt::format("{:<24} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "label", "Q1", "Q2", "Q3", "Q4",
                                "total", "n");
  for (const auto& r : reports) {
    out += fmt::format("{:<24} {:>8.3f} {:>8.3f} {:>8.3f} {:>8.3f} {:>8.3f} {:>8}\n", r.label, r.mean_per_stage[0],
                       r.mean_per_stage[1], r.mean_per_stage[2], r.mean_per_stage[3], r.mean_total, r.samples);
  }
  return out;
}

std::string density_csv(std::span<const DensityReport> reports) {
  std::string out = "label,stage,mean_mentions\n";
  for (const auto& r : reports) {
    for (std::size_t q = 0; q < 4; ++q) out += fmt::format("{},{},{}\n", r.label, q + 1, r.mean_per_stage[q]);
  }
  return out;
}

// ---- stage audit -----------------------------------------------------------

StageAuditSummary stage_audit_aggregate(std::span<const StageAuditRecord> records) {
  if (records.empty()) throw EmptyInput("stage audit needs at least one record");
  StageAuditSummary s;
  s.records = records.size();
  std::array<std::size_t, 4> ok{};
  std::size_t final_ok = 0;
  std::size_t reversals = 0;
  for (const auto& r : records) {
    for (std::size_t k = 0; k < 4; ++k) ok[k] += r.stage_correct[k] ? 1 : 0;
    final_ok += r.final_correct ? 1 : 0;
    if (r.final_correct && !r.stage_correct[1]) ++reversals;
  }
  const double n = static_cast<double>(s.records);
  for (std::size_t k = 0; k < 4; ++k) s.stage_accuracy[k] = static_cast<double>(ok[k]) / n;
  s.final_accuracy = static_cast<double>(final_ok) / n;
  s.reversal_rate = static_cast<double>(reversals) / n;
  return s;
}

StageAuditRecord stage_record_from_verdict(std::string instance_id, const StructuralVerdict& v, bool final_correct) {
  return {std::move(instance_id), v.stage_present, final_correct};
}

StageAuditRecord stage_record_from_json(const json& j) {
  check_keys(j, {"instance_id", "stages", "final_correct", "encoding", "interpretation", "goal", "response"});
  StageAuditRecord r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.final_correct = j.at("final_correct").get<bool>();
  if (j.contains("stages")) {
    const auto& st = j.at("stages");
    if (!st.is_array() || st.size() != 4) throw std::invalid_argument("stages must be an array of 4 booleans");
    for (std::size_t k = 0; k < 4; ++k) r.stage_correct[k] = st[k].get<bool>();
  } else {
    for (std::size_t k = 0; k < 4; ++k) r.stage_correct[k] = j.at(std::string(kStageNames[k])).get<bool>();
  }
  return r;
}

json stage_record_to_json(const StageAuditRecord& r) {
  return {{"instance_id", r.instance_id}, {"stages", r.stage_correct}, {"final_correct", r.final_correct}};
}

std::vector<StageAuditRecord> parse_stage_records(std::string_view text) {
  return parse_lines<StageAuditRecord>(text, stage_record_from_json);
}

json stage_summary_to_json(const StageAuditSummary& s) {
  json acc = json::object();
  for (std::size_t k = 0; k < 4; ++k) acc[std::string(kStageNames[k])] = s.stage_accuracy[k];
  return {{"records", s.records},
          {"stage_accuracy", acc},
          {"final_accuracy", s.final_accuracy},
          {"reversal_rate", s.reversal_rate}};
}

std::string stage_table(const StageAuditSummary& s) {
  std::string out = fmt::format("{:<16} {:>8}\n", "stage", "accuracy");
  for (std::size_t k = 0; k < 4; ++k) out += fmt::format("{:<16} {:>8.3f}\n", kStageNames[k], s.stage_accuracy[k]);
  out += fmt::format("{:<16} {:>8.3f}\n", "final", s.final_accuracy);
  out += fmt::format("{:<16} {:>8.3f}\n", "reversal", s.reversal_rate);
  out += fmt::format("{:<16} {:>8}\n", "records", s.records);
  return out;
}

// ---- perturbation ----------------------------------------------------------

std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0;
  while (i < text.size() && is_space(text[i])) ++i;
  std::size_t begin = i;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '.' || c == '?' || c == '!') {
      std::size_t end = i + 1;
      while (end < text.size() && (text[end] == '.' || text[end] == '?' || text[end] == '!')) ++end;
      while (end < text.size() && (text[end] == '"' || text[end] == '\'' || text[end] == ')' || text[end] == ']')) {
        ++end;
      }
      // UTF-8 right double / single quotation marks.
      while (end + 3 <= text.size() &&
             (text.substr(end, 3) == "\xE2\x80\x9D" || text.substr(end, 3) == "\xE2\x80\x99")) {
        end += 3;
      }
      if (end == text.size() || is_space(text[end])) {
        out.emplace_back(begin, end);
        i = end;
        while (i < text.size() && is_space(text[i])) ++i;
        begin = i;
        continue;
      }
      i = end;
      continue;
    }
    ++i;
  }
  if (begin < text.size()) {
    std::size_t end = text.size();
    while (end > begin && is_space(text[end - 1])) --end;
    out.emplace_back(begin, end);
  }
  return out;
}

Instance perturb_instance(const Instance& instance, std::span<const Distractor> distractors) {
  const auto spans = sentence_spans(instance.story);
  for (const auto& d : distractors) {
    if (d.anchor > spans.size()) {
      throw AnchorOutOfRange("anchor " + std::to_string(d.anchor) + " exceeds the " + std::to_string(spans.size()) +
                             " sentences of " + instance.id);
    }
  }
  std::vector<std::size_t> order(distractors.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return distractors[a].anchor < distractors[b].anchor; });

  const std::string& story = instance.story;
  std::string out;
  std::size_t copied = 0;  // bytes of the original story already emitted
  for (auto idx : order) {
    const auto& d = distractors[idx];
    if (d.anchor == 0) {
      out += d.sentence;
      out += ' ';
      continue;
    }
    const std::size_t cut = spans[d.anchor - 1].second;
    out.append(story, copied, cut - copied);
    copied = cut;
    out += ' ';
    out += d.sentence;
  }
  out.append(story, copied, std::string::npos);

  Instance p = instance;
  p.id = instance.id + std::string(kPerturbedSuffix);
  p.story = std::move(out);
  return p;
}

std::vector<DistractorSet> parse_distractor_sets(std::string_view text) {
  return parse_lines<DistractorSet>(text, [](const json& j) {
    check_keys(j, {"id", "distractors"});
    DistractorSet s;
    s.id = j.at("id").get<std::string>();
    for (const auto& d : j.at("distractors")) {
      check_keys(d, {"sentence", "anchor"});
      s.distractors.push_back({d.at("sentence").get<std::string>(), d.at("anchor").get<std::size_t>()});
    }
    return s;
  });
}

std::vector<std::pair<EvalResult, EvalResult>> align_results(std::span<const EvalResult> original,
                                                             std::span<const EvalResult> perturbed) {
  std::map<std::string, const EvalResult*> by_id;
  for (const auto& r : original) {
    if (!by_id.emplace(r.instance_id, &r).second) throw MisalignedPairs("duplicate original id " + r.instance_id);
  }
  std::vector<std::pair<EvalResult, EvalResult>> out;
  std::set<std::string> used;
  for (const auto& p : perturbed) {
    std::string base = p.instance_id;
    if (!by_id.contains(base) && base.ends_with(kPerturbedSuffix)) base.resize(base.size() - kPerturbedSuffix.size());
    auto it = by_id.find(base);
    if (it == by_id.end()) throw MisalignedPairs("perturbed result " + p.instance_id + " has no original");
    if (!used.insert(base).second) throw MisalignedPairs("original " + base + " matched twice");
    out.emplace_back(*it->second, p);
  }
  if (used.size() != by_id.size()) {
    for (const auto& [id, _] : by_id) {
      if (!used.contains(id)) throw MisalignedPairs("original " + id + " has no perturbed result");
    }
  }
  return out;
}

PerturbationResult robustness_study(std::span<const std::pair<EvalResult, EvalResult>> pairs) {
  if (pairs.empty()) throw EmptyInput("robustness study needs at least one pair");
  PerturbationResult r;
  for (const auto& [o, p] : pairs) {
    if (p.instance_id != o.instance_id && p.instance_id != o.instance_id + std::string(kPerturbedSuffix)) {
      throw MisalignedPairs(o.instance_id + " paired with " + p.instance_id);
    }
    r.rows.push_back({o.instance_id, o.correct, p.correct, o.thinking_length, p.thinking_length});
  }
  std::sort(r.rows.begin(), r.rows.end(),
            [](const PerturbationRow& a, const PerturbationRow& b) { return a.instance_id < b.instance_id; });
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    if (r.rows[i].instance_id == r.rows[i - 1].instance_id) {
      throw MisalignedPairs("instance " + r.rows[i].instance_id + " appears twice");
    }
  }

  std::size_t orig_ok = 0, pert_ok = 0, kept = 0;
  std::size_t orig_len = 0, pert_len = 0;
  for (const auto& row : r.rows) {
    orig_ok += row.original_correct;
    pert_ok += row.perturbed_correct;
    kept += row.original_correct && row.perturbed_correct;
    orig_len += row.original_length;
    pert_len += row.perturbed_length;
  }
  const double n = static_cast<double>(r.rows.size());
  r.original_accuracy = static_cast<double>(orig_ok) / n;
  r.perturbed_accuracy = static_cast<double>(pert_ok) / n;
  if (orig_ok > 0) r.retention = static_cast<double>(kept) / static_cast<double>(orig_ok);
  r.mean_original_length = static_cast<double>(orig_len) / n;
  r.mean_perturbed_length = static_cast<double>(pert_len) / n;
  r.length_drift = r.mean_perturbed_length - r.mean_original_length;
  if (orig_len > 0) r.length_drift_percent = 100.0 * r.length_drift / r.mean_original_length;
  return r;
}

EvalResult eval_result_from_json(const json& j) {
  check_keys(j, {"instance_id", "correct", "thinking_length", "predicted", "ability"});
  return {j.at("instance_id").get<std::string>(), j.at("correct").get<bool>(),
          j.at("thinking_length").get<std::size_t>()};
}

json eval_result_to_json(const EvalResult& r) {
  return {{"instance_id", r.instance_id}, {"correct", r.correct}, {"thinking_length", r.thinking_length}};
}

std::vector<EvalResult> parse_eval_results(std::string_view text) {
  return parse_lines<EvalResult>(text, eval_result_from_json);
}

json perturbation_to_json(const PerturbationResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"instance_id", row.instance_id},
                    {"original_correct", row.original_correct},
                    {"perturbed_correct", row.perturbed_correct},
                    {"original_length", row.original_length},
                    {"perturbed_length", row.perturbed_length}});
  }
  return {{"rows", rows},
          {"original_accuracy", r.original_accuracy},
          {"perturbed_accuracy", r.perturbed_accuracy},
          {"retention", optional_json(r.retention)},
          {"mean_original_length", r.mean_original_length},
          {"mean_perturbed_length", r.mean_perturbed_length},
          {"length_drift", r.length_drift},
          {"length_drift_percent", optional_json(r.length_drift_percent)}};
}

std::string perturbation_table(const PerturbationResult& r) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.3f}", *v) : std::string("n/a"); };
  std::string out;
  out += fmt::format("{:<24} {:>12}\n", "instances", r.rows.size());
  out += fmt::format("{:<24} {:>12.3f}\n", "original accuracy", r.original_accuracy);
  out += fmt::format("{:<24} {:>12.3f}\n", "perturbed accuracy", r.perturbed_accuracy);
  out += fmt::format("{:<24} {:>12}\n", "retention", opt(r.retention));
  out += fmt::format("{:<24} {:>12.1f}\n", "mean length (orig)", r.mean_original_length);
  out += fmt::format("{:<24} {:>12.1f}\n", "mean length (pert)", r.mean_perturbed_length);
  out += fmt::format("{:<24} {:>12.1f}\n", "length drift", r.length_drift);
  out += fmt::format("{:<24} {:>12}\n", "length drift %", opt(r.length_drift_percent));
  return out;
}

}  // namespace sipreward
