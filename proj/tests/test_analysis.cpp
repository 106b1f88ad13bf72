// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "sipreward/analysis.hpp"
#include "sipreward/errors.hpp"
#include "test_data.hpp"

namespace sipreward {
namespace {

using nlohmann::json;
using testing::read_data;

Instance grimmo() { return parse_dataset(read_data("grimmo.jsonl")).at(0); }

TEST(Density, SingleTraceEqualsItsProfile) {
  const std::vector<Instance> inst = {grimmo()};
  for (const char* file : {"grimmo_grounded.txt", "grimmo_option_shortcut.txt", "grimmo_baseline.txt"}) {
    const std::vector<ParsedTrajectory> t = {parse_trajectory(read_data(file))};
    const auto profile = count_option_mentions(t[0], inst[0].options);
    const auto r = density_report(inst, t);
    EXPECT_EQ(r.samples, 1u);
    EXPECT_EQ(r.mean_total, static_cast<double>(profile.total)) << file;
    for (std::size_t s = 0; s < 4; ++s) EXPECT_EQ(r.mean_per_stage[s], static_cast<double>(profile.per_quartile_counts[s]));
  }
}

TEST(Density, MeanOverSamples) {
  const std::vector<Instance> inst = {grimmo(), grimmo()};
  const std::vector<ParsedTrajectory> t = {parse_trajectory(read_data("grimmo_option_shortcut.txt")),
                                           parse_trajectory(read_data("grimmo_baseline.txt"))};
  const auto r = density_report(inst, t, Segmentation::Quartile, nullptr, "mix");
  EXPECT_DOUBLE_EQ(r.mean_total, (49.0 + 40.0) / 2.0);
  EXPECT_DOUBLE_EQ(r.mean_per_stage[0], (8.0 + 7.0) / 2.0);
  EXPECT_DOUBLE_EQ(r.mean_per_stage[3], (17.0 + 15.0) / 2.0);
  EXPECT_EQ(density_to_json(r).at("label"), "mix");
  const std::vector<DensityReport> reports = {r};
  const auto csv = density_csv(reports);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "label,stage,mean_mentions");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Density, Errors) {
  const std::vector<Instance> inst = {grimmo()};
  EXPECT_THROW(density_report(inst, std::vector<ParsedTrajectory>{}), DataError);
  EXPECT_THROW(density_report(std::vector<Instance>{}, std::vector<ParsedTrajectory>{}), EmptyInput);
  EXPECT_THROW(density_report(inst, std::vector<ParsedTrajectory>{parse_trajectory("<answer>A</answer>")}),
               MissingThinking);
  const std::vector<ParsedTrajectory> t = {parse_trajectory(read_data("grimmo_grounded.txt"))};
  EXPECT_THROW(density_report(inst, t, Segmentation::Judge, nullptr), ConfigError);
}

TEST(Density, JudgeSegmentationKeepsTotals) {
  const std::vector<Instance> inst = {grimmo()};
  const std::vector<ParsedTrajectory> t = {parse_trajectory(read_data("grimmo_baseline.txt"))};
  auto backend = mock_judge(2);
  JudgeClient client(*backend, nullptr);
  const auto r = density_report(inst, t, Segmentation::Judge, &client);
  EXPECT_EQ(r.mean_total, 40.0);
  double sum = 0;
  for (double x : r.mean_per_stage) sum += x;
  EXPECT_EQ(sum, 40.0);
}

StageAuditRecord rec(int i, std::array<bool, 4> s, bool fin) { return {"i" + std::to_string(i), s, fin}; }

TEST(StageAudit, ReversalRate) {
  std::vector<StageAuditRecord> r;
  for (int i = 0; i < 3; ++i) r.push_back(rec(i, {true, false, true, true}, true));    // reversals
  for (int i = 3; i < 7; ++i) r.push_back(rec(i, {true, true, true, true}, true));
  for (int i = 7; i < 10; ++i) r.push_back(rec(i, {true, false, false, false}, false));
  const auto s = stage_audit_aggregate(r);
  EXPECT_EQ(s.records, 10u);
  EXPECT_DOUBLE_EQ(s.reversal_rate, 0.3);
  EXPECT_DOUBLE_EQ(s.final_accuracy, 0.7);
  EXPECT_DOUBLE_EQ(s.stage_accuracy[0], 1.0);
  EXPECT_DOUBLE_EQ(s.stage_accuracy[1], 0.4);
  EXPECT_DOUBLE_EQ(s.stage_accuracy[2], 0.7);
  EXPECT_THROW(stage_audit_aggregate(std::vector<StageAuditRecord>{}), EmptyInput);
}

TEST(StageAudit, RecordJsonForms) {
  const auto a = stage_record_from_json(json::parse(R"({"instance_id": "x", "stages": [true, false, true, true], "final_correct": true})"));
  const auto b = stage_record_from_json(json::parse(
      R"({"instance_id": "x", "encoding": true, "interpretation": false, "goal": true, "response": true, "final_correct": true})"));
  EXPECT_EQ(a.stage_correct, b.stage_correct);
  EXPECT_EQ(stage_record_from_json(stage_record_to_json(a)).stage_correct, a.stage_correct);
  EXPECT_THROW(stage_record_from_json(json::parse(R"({"instance_id": "x", "stages": [true], "final_correct": true})")),
               std::invalid_argument);
  const StructuralVerdict v{{true, true, false, true}, true, false, 0.75};
  EXPECT_EQ(stage_record_from_verdict("y", v, false).stage_correct, v.stage_present);
}

TEST(SentenceSpans, Boundaries) {
  const std::string text = "He ran. \"Why?\" she asked! Dr.Smith stayed (quietly.) End";
  const auto spans = sentence_spans(text);
  ASSERT_EQ(spans.size(), 5u);
  EXPECT_EQ(text.substr(spans[0].first, spans[0].second - spans[0].first), "He ran.");
  EXPECT_EQ(text.substr(spans[1].first, spans[1].second - spans[1].first), "\"Why?\"");
  EXPECT_EQ(text.substr(spans[3].first, spans[3].second - spans[3].first), "Dr.Smith stayed (quietly.)");
  EXPECT_EQ(text.substr(spans[4].first), "End");
}

TEST(Perturb, ReproducesReferenceStory) {
  const auto alex = parse_dataset(read_data("alex.jsonl")).at(0);
  const auto sets = parse_distractor_sets(read_data("alex_distractors.jsonl"));
  ASSERT_EQ(sets.size(), 1u);
  const auto expected = parse_dataset(read_data("alex_perturbed_expected.jsonl")).at(0);
  const auto got = perturb_instance(alex, sets[0].distractors);
  EXPECT_EQ(got, expected);
  EXPECT_EQ(got.id, "alex-perturbed");
  Instance restored = got;
  restored.id = alex.id;
  restored.story = alex.story;
  EXPECT_EQ(restored, alex);
}

TEST(Perturb, Anchors) {
  Instance base = grimmo();
  base.story = "One. Two. Three.";
  EXPECT_EQ(perturb_instance(base, std::vector<Distractor>{{"Zero.", 0}}).story, "Zero. One. Two. Three.");
  EXPECT_EQ(perturb_instance(base, std::vector<Distractor>{{"End.", 3}}).story, "One. Two. Three. End.");
  EXPECT_EQ(perturb_instance(base, std::vector<Distractor>{{"X.", 1}, {"Y.", 1}}).story, "One. X. Y. Two. Three.");
  EXPECT_THROW(perturb_instance(base, std::vector<Distractor>{{"Far.", 4}}), AnchorOutOfRange);
  EXPECT_EQ(perturb_instance(base, {}).story, base.story);
}

EvalResult ev(std::string id, bool ok, std::size_t len) { return {std::move(id), ok, len}; }

TEST(Robustness, LengthDriftAndRetention) {
  const std::vector<EvalResult> orig = {ev("a", true, 1000), ev("b", true, 1000), ev("c", false, 1000)};
  const std::vector<EvalResult> pert = {ev("c-perturbed", true, 1100), ev("a-perturbed", true, 1100),
                                        ev("b-perturbed", false, 1100)};
  const auto pairs = align_results(orig, pert);
  const auto r = robustness_study(pairs);
  EXPECT_DOUBLE_EQ(*r.length_drift_percent, 10.0);
  EXPECT_DOUBLE_EQ(r.length_drift, 100.0);
  EXPECT_DOUBLE_EQ(*r.retention, 0.5);
  EXPECT_DOUBLE_EQ(r.original_accuracy, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.perturbed_accuracy, 2.0 / 3.0);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows[0].instance_id, "a");
}

TEST(Robustness, UndefinedRatios) {
  const std::vector<std::pair<EvalResult, EvalResult>> pairs = {{ev("a", false, 0), ev("a-perturbed", false, 5)}};
  const auto r = robustness_study(pairs);
  EXPECT_FALSE(r.retention);
  EXPECT_FALSE(r.length_drift_percent);
  EXPECT_TRUE(perturbation_to_json(r).at("retention").is_null());
}

TEST(Robustness, Misalignment) {
  const std::vector<EvalResult> orig = {ev("a", true, 1), ev("b", true, 1)};
  EXPECT_THROW(align_results(orig, std::vector<EvalResult>{ev("a-perturbed", true, 1)}), MisalignedPairs);
  EXPECT_THROW(align_results(orig, std::vector<EvalResult>{ev("a", true, 1), ev("z", true, 1)}), MisalignedPairs);
  EXPECT_THROW(robustness_study(std::vector<std::pair<EvalResult, EvalResult>>{}), EmptyInput);
  const std::vector<std::pair<EvalResult, EvalResult>> bad = {{ev("a", true, 1), ev("b-perturbed", true, 1)}};
  EXPECT_THROW(robustness_study(bad), MisalignedPairs);
}

TEST(Robustness, EvalResultJson) {
  const auto r = eval_result_from_json(
      json::parse(R"({"instance_id": "a", "correct": true, "thinking_length": 12, "predicted": "B", "ability": "Belief"})"));
  EXPECT_EQ(r.thinking_length, 12u);
  EXPECT_EQ(eval_result_from_json(eval_result_to_json(r)).instance_id, "a");
}

}  // namespace
}  // namespace sipreward
