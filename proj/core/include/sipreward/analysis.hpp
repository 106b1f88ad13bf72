// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sipreward/core.hpp"
#include "sipreward/judge.hpp"
#include "sipreward/trajectory.hpp"

namespace sipreward {

// ---- option-mention density ------------------------------------------------

enum class Segmentation { Quartile, Judge };

std::string_view to_string(Segmentation s) noexcept;
Segmentation parse_segmentation(std::string_view s);

struct DensityReport {
  std::string label;
  /// Mean mentions per sample in each stage bucket.
  std::array<double, 4> mean_per_stage{};
  double mean_total = 0.0;
  std::size_t samples = 0;
};

/// `instances[i]` is the item `traces[i]` answers. Judge segmentation needs a
/// client and falls back to quartiles per the client's options. Throws
/// EmptyInput, MissingThinking, or DataError on a length mismatch.
DensityReport density_report(std::span<const Instance> instances, std::span<const ParsedTrajectory> traces,
                             Segmentation segmentation = Segmentation::Quartile, JudgeClient* client = nullptr,
                             std::string label = "");

nlohmann::json density_to_json(const DensityReport& r);
std::string density_table(std::span<const DensityReport> reports);
/// Columns: label,stage,mean_mentions. One row per stage.
std::string density_csv(std::span<const DensityReport> reports);

// ---- stage audit -----------------------------------------------------------

struct StageAuditRecord {
  std::string instance_id;
  /// Encoding, interpretation, goal, response.
  std::array<bool, 4> stage_correct{};
  bool final_correct = false;
};

struct StageAuditSummary {
  std::size_t records = 0;
  std::array<double, 4> stage_accuracy{};
  double final_accuracy = 0.0;
  /// Fraction with a correct final answer but a wrong interpretation stage.
  double reversal_rate = 0.0;
};

/// Throws EmptyInput.
StageAuditSummary stage_audit_aggregate(std::span<const StageAuditRecord> records);

/// Treats a stage the structural judge found present as correct.
StageAuditRecord stage_record_from_verdict(std::string instance_id, const StructuralVerdict& v, bool final_correct);

/// {instance_id, stages:[4 bools], final_correct}, or the stages as keys
/// encoding/interpretation/goal/response. Throws std::invalid_argument.
StageAuditRecord stage_record_from_json(const nlohmann::json& j);
nlohmann::json stage_record_to_json(const StageAuditRecord& r);
std::vector<StageAuditRecord> parse_stage_records(std::string_view text);
nlohmann::json stage_summary_to_json(const StageAuditSummary& s);
std::string stage_table(const StageAuditSummary& s);

// ---- perturbation ----------------------------------------------------------

struct Distractor {
  std::string sentence;
  /// Number of original sentences that precede the insertion point.
  std::size_t anchor = 0;
};

inline constexpr std::string_view kPerturbedSuffix = "-perturbed";

/// Sentences end at '.', '?' or '!' (plus any closing quotes or brackets)
/// followed by whitespace or the end of the text. Returns each sentence's
/// [begin, end) byte span.
std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(std::string_view text);

/// Inserts each distractor after `anchor` sentences, separated by single
/// spaces. Distractors sharing an anchor keep their given order. Only the id
/// and story change. Throws AnchorOutOfRange.
Instance perturb_instance(const Instance& instance, std::span<const Distractor> distractors);

/// {id, distractors:[{sentence, anchor}...]}.
struct DistractorSet {
  std::string id;
  std::vector<Distractor> distractors;
};
std::vector<DistractorSet> parse_distractor_sets(std::string_view text);

struct EvalResult {
  std::string instance_id;
  bool correct = false;
  std::size_t thinking_length = 0;
};

struct PerturbationRow {
  std::string instance_id;
  bool original_correct = false;
  bool perturbed_correct = false;
  std::size_t original_length = 0;
  std::size_t perturbed_length = 0;
};

struct PerturbationResult {
  std::vector<PerturbationRow> rows;  // sorted by instance id
  double original_accuracy = 0.0;
  double perturbed_accuracy = 0.0;
  /// Share of originally-correct instances still correct; absent when none
  /// were correct.
  std::optional<double> retention;
  double mean_original_length = 0.0;
  double mean_perturbed_length = 0.0;
  double length_drift = 0.0;
  /// 100 * drift / mean original length; absent when that mean is zero.
  std::optional<double> length_drift_percent;
};

/// Each perturbed id must equal the original id or carry the "-perturbed"
/// suffix. Throws EmptyInput or MisalignedPairs.
PerturbationResult robustness_study(std::span<const std::pair<EvalResult, EvalResult>> pairs);

/// Pairs results by id (original "x" with perturbed "x-perturbed" or "x").
/// Throws MisalignedPairs when either side has an unmatched id.
std::vector<std::pair<EvalResult, EvalResult>> align_results(std::span<const EvalResult> original,
                                                             std::span<const EvalResult> perturbed);

EvalResult eval_result_from_json(const nlohmann::json& j);
nlohmann::json eval_result_to_json(const EvalResult& r);
std::vector<EvalResult> parse_eval_results(std::string_view text);
nlohmann::json perturbation_to_json(const PerturbationResult& r);
std::string perturbation_table(const PerturbationResult& r);

}  // namespace sipreward
