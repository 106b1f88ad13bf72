// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sipreward/core.hpp"
#include "sipreward/judge.hpp"
#include "sipreward/random.hpp"
#include "sipreward/rewards.hpp"
#include "sipreward/scoring.hpp"
#include "sipreward/trajectory.hpp"

namespace sipreward {

/// Learning rate used at 8B-parameter scale. The tabular toy policy needs a
/// much larger step (GrpoConfig::learning_rate).
inline constexpr double kLargeModelLearningRate = 5e-7;

struct GrpoConfig {
  std::size_t group_size = 5;
  double kl_coeff = 0.04;
  double learning_rate = 0.05;
  std::size_t total_steps = 600;
  double std_epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Instances sampled per step.
  std::size_t batch_size = 8;
  /// Also learn which template family to write with.
  bool learn_template = false;

  void validate() const;
};

/// (r - mean) / (population std + eps); all zeros when every reward is equal.
/// Throws GroupTooSmall for fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, double eps);

std::vector<double> softmax(std::span<const double> logits);

/// KL(p || q) for two normalized distributions.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct PolicyHead {
  std::vector<double> logits;
  std::vector<double> reference;

  std::vector<double> probs() const { return softmax(logits); }
  double kl_to_reference() const;
};

/// Tabular softmax policy: one answer head per instance over its option
/// labels, plus one head over template families.
class ToyPolicy {
 public:
  struct Entry {
    std::vector<char> labels;
    PolicyHead answer;
    PolicyHead templ;
  };

  ToyPolicy() = default;

  /// Zero logits everywhere; references equal the initial logits.
  static ToyPolicy uniform(std::span<const Instance> instances, std::size_t template_count);

  bool contains(const std::string& id) const { return entries_.contains(id); }
  Entry& at(const std::string& id);
  const Entry& at(const std::string& id) const;
  std::map<std::string, Entry>& entries() noexcept { return entries_; }
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

  /// Copies the current logits into the references.
  void snapshot_reference();

  friend bool operator==(const ToyPolicy& a, const ToyPolicy& b);

 private:
  std::map<std::string, Entry> entries_;
};

bool operator==(const ToyPolicy::Entry& a, const ToyPolicy::Entry& b);

enum class TemplateFamily { Concise, Balanced, Verbose, Shortcut };

inline constexpr std::size_t kTemplateFamilyCount = 4;
std::string_view to_string(TemplateFamily family) noexcept;

struct TemplateShape {
  std::size_t min_tokens = 0;
  std::size_t max_tokens = 0;
};

/// Writes reasoning text for a given answer. Families differ in length,
/// repetition, stage coverage, and how early the options are named.
class TrajectorySynthesizer {
 public:
  TrajectorySynthesizer();

  std::string thinking(const Instance& instance, char answer, TemplateFamily family, Rng& rng) const;

  static TemplateShape shape(TemplateFamily family) noexcept;

 private:
  std::string filler(std::size_t words, Rng& rng) const;

  std::vector<std::string> vocabulary_;
};

struct Rollout {
  ParsedTrajectory trajectory;
  std::size_t answer_index = 0;
  std::size_t template_index = 0;
};

/// Samples an answer (and, when `learn_template`, a template family) from the
/// policy and writes a well-formed tagged trajectory for it. Throws
/// UnknownInstance when the policy has no entry for the instance.
Rollout toy_rollout(const ToyPolicy& policy, const Instance& instance, const TrajectorySynthesizer& synthesizer,
                    Rng& rng, bool learn_template = false, TemplateFamily fixed = TemplateFamily::Balanced,
                    TagStyle style = TagStyle::Think);

struct RolloutGroup {
  std::string instance_id;
  std::vector<ParsedTrajectory> trajectories;
  std::vector<std::size_t> answer_choices;
  std::vector<std::size_t> template_choices;  // empty unless the template head is learned
  std::vector<double> rewards;
  std::vector<double> advantages;
};

/// Per-head gradients of the surrogate objective
///   sum_groups [ mean_k A_k log pi(choice_k) - kl_coeff * KL(pi || ref) ].
struct PolicyGradient {
  std::map<std::string, std::vector<double>> answer;
  std::map<std::string, std::vector<double>> templ;
};

double surrogate_objective(const ToyPolicy& policy, std::span<const RolloutGroup> groups, double kl_coeff);
PolicyGradient surrogate_gradient(const ToyPolicy& policy, std::span<const RolloutGroup> groups, double kl_coeff);

struct UpdateMetrics {
  /// Mean over updated instances of KL(policy || reference), summed over heads.
  double mean_kl = 0.0;
};

/// One ascent step on the surrogate objective. When learning_rate * kl_coeff
/// is large the KL pull is integrated in small, backtracked substeps so the
/// update cannot overshoot the reference.
UpdateMetrics grpo_step(ToyPolicy& policy, std::span<const RolloutGroup> groups, const GrpoConfig& cfg);

struct StepMetrics {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double accuracy = 0.0;
  double mean_length = 0.0;
  double mean_rho = 0.0;
  double mean_struct = 0.0;
  double mean_content = 0.0;
  double mean_kl = 0.0;
};

nlohmann::json step_metrics_to_json(const StepMetrics& m);

struct Checkpoint {
  /// Next step to run.
  std::size_t step = 0;
  ToyPolicy policy;
};

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

struct TrainOptions {
  RewardMask mask;
  TagStyle tag_style = TagStyle::Think;
  /// Template used when the template head is not learned.
  TemplateFamily fixed_template = TemplateFamily::Balanced;
  std::size_t jobs = 1;
  std::optional<Checkpoint> resume;
  std::function<void(const StepMetrics&)> on_step;
  /// Called every `checkpoint_every` steps, at the end, and before a judge
  /// failure is rethrown.
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::size_t checkpoint_every = 50;
};

struct TrainingReport {
  std::vector<StepMetrics> metrics;
  ToyPolicy policy;
  /// Fraction of train instances whose most probable label is the gold one.
  double train_accuracy = 0.0;
  /// Mean probability of the gold label over train instances.
  double train_expected_accuracy = 0.0;
};

/// Greedy accuracy of `policy` over `instances`.
double greedy_accuracy(const ToyPolicy& policy, std::span<const Instance> instances);

/// Closed-loop GRPO on the tabular policy. `client` may be null only when
/// the mask disables both judge-based rewards.
TrainingReport train_toy(const DatasetSplit& dataset, const GrpoConfig& cfg, const CurriculumConfig& cur,
                         const LengthRewardConfig& len_cfg, JudgeClient* client, const TrainOptions& options = {});

}  // namespace sipreward
