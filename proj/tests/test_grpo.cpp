// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "sipreward/errors.hpp"
#include "sipreward/grpo.hpp"
#include "synthetic.hpp"

namespace sipreward {
namespace {

using nlohmann::json;
using testing::synthetic_dataset;

TEST(GroupAdvantages, ReferenceValues) {
  // Computed with 40-digit arithmetic, eps = 1e-8.
  const std::vector<double> r = {3.4, 0.0, 3.4, 3.4, 0.0};
  const auto a = group_advantages(r, 1e-8);
  for (std::size_t i : {0u, 2u, 3u}) EXPECT_NEAR(a[i], 0.8164965760257652778, 1e-15);
  for (std::size_t i : {1u, 4u}) EXPECT_NEAR(a[i], -1.2247448640386479168, 1e-15);
  const auto b = group_advantages(std::vector<double>{1.0, 0.0}, 1e-8);
  EXPECT_NEAR(b[0], 0.99999998000000039999, 1e-15);
  EXPECT_NEAR(b[1], -0.99999998000000039999, 1e-15);
}

TEST(GroupAdvantages, EqualRewardsGiveZeros) {
  for (double v : {0.0, 1.0, 3.4, -2.5}) {
    const auto a = group_advantages(std::vector<double>(5, v), 1e-8);
    for (double x : a) EXPECT_EQ(x, 0.0);
  }
}

TEST(GroupAdvantages, TooSmall) {
  EXPECT_THROW(group_advantages(std::vector<double>{1.0}, 1e-8), GroupTooSmall);
  EXPECT_THROW(group_advantages(std::vector<double>{}, 1e-8), GroupTooSmall);
}

TEST(GroupAdvantages, ZeroMeanUnitScaleAndAffineInvariance) {
  Rng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t g = 2 + rng.uniform_index(8);
    std::vector<double> r(g);
    for (auto& x : r) x = 4.0 * rng.uniform01() - 1.0;
    const auto a = group_advantages(r, 1e-12);
    const double sum = std::accumulate(a.begin(), a.end(), 0.0);
    ASSERT_NEAR(sum, 0.0, 1e-9);
    double sq = 0.0;
    for (double x : a) sq += x * x;
    ASSERT_NEAR(sq / static_cast<double>(g), 1.0, 1e-6);

    const double scale = 0.5 + 3.0 * rng.uniform01();
    const double shift = 10.0 * rng.uniform01() - 5.0;
    std::vector<double> r2(g);
    for (std::size_t i = 0; i < g; ++i) r2[i] = scale * r[i] + shift;
    const auto a2 = group_advantages(r2, 1e-12);
    for (std::size_t i = 0; i < g; ++i) ASSERT_NEAR(a[i], a2[i], 1e-8);
  }
}

TEST(Softmax, StableAndNormalized) {
  const auto p = softmax(std::vector<double>{1000.0, 1000.0, -1000.0});
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_EQ(p[2], 0.0);
  EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-15);
  const auto q = softmax(std::vector<double>{0.0, 0.0, 0.0});
  EXPECT_NEAR(kl_divergence(std::vector<double>{0.5, 0.5, 0.0}, q), std::log(1.5), 1e-15);
}

TEST(GrpoConfig, Validation) {
  GrpoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.group_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.kl_coeff = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

ToyPolicy random_policy(std::span<const Instance> data, Rng& rng) {
  auto p = ToyPolicy::uniform(data, kTemplateFamilyCount);
  for (auto& [id, e] : p.entries()) {
    for (auto& x : e.answer.logits) x = 2.0 * rng.uniform01() - 1.0;
    for (auto& x : e.answer.reference) x = 2.0 * rng.uniform01() - 1.0;
    for (auto& x : e.templ.logits) x = 2.0 * rng.uniform01() - 1.0;
  }
  return p;
}

std::vector<RolloutGroup> random_groups(std::span<const Instance> data, Rng& rng, bool templ) {
  std::vector<RolloutGroup> groups;
  for (int i = 0; i < 4; ++i) {
    RolloutGroup g;
    g.instance_id = data[rng.uniform_index(data.size())].id;
    std::vector<double> rewards;
    for (int k = 0; k < 5; ++k) {
      g.answer_choices.push_back(rng.uniform_index(4));
      if (templ) g.template_choices.push_back(rng.uniform_index(kTemplateFamilyCount));
      rewards.push_back(rng.uniform01() * 4.0);
    }
    g.advantages = group_advantages(rewards, 1e-8);
    groups.push_back(std::move(g));
  }
  return groups;
}

TEST(SurrogateGradient, MatchesFiniteDifferences) {
  const auto data = synthetic_dataset(3, 1);
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto policy = random_policy(data, rng);
    const auto groups = random_groups(data, rng, trial % 2 == 0);
    const double kl = 0.3;
    const auto grad = surrogate_gradient(policy, groups, kl);
    const double h = 1e-6;
    auto check = [&](auto head_of, const std::map<std::string, std::vector<double>>& g) {
      for (const auto& [id, gv] : g) {
        for (std::size_t j = 0; j < gv.size(); ++j) {
          auto plus = policy;
          auto minus = policy;
          head_of(plus.at(id)).logits[j] += h;
          head_of(minus.at(id)).logits[j] -= h;
          const double fd = (surrogate_objective(plus, groups, kl) - surrogate_objective(minus, groups, kl)) / (2 * h);
          ASSERT_NEAR(gv[j], fd, 1e-7) << id << " " << j;
        }
      }
    };
    check([](ToyPolicy::Entry& e) -> PolicyHead& { return e.answer; }, grad.answer);
    check([](ToyPolicy::Entry& e) -> PolicyHead& { return e.templ; }, grad.templ);
  }
}

TEST(SurrogateGradient, RejectsMismatchedGroups) {
  const auto data = synthetic_dataset(2, 1);
  const auto policy = ToyPolicy::uniform(data, kTemplateFamilyCount);
  RolloutGroup g;
  g.instance_id = data[0].id;
  g.answer_choices = {0, 1};
  g.advantages = {1.0};
  EXPECT_THROW(surrogate_gradient(policy, std::vector<RolloutGroup>{g}, 0.0), DataError);
  g.advantages = {1.0, -1.0};
  g.answer_choices = {0, 9};
  EXPECT_THROW(surrogate_gradient(policy, std::vector<RolloutGroup>{g}, 0.0), DataError);
  g.instance_id = "missing";
  EXPECT_THROW(surrogate_gradient(policy, std::vector<RolloutGroup>{g}, 0.0), UnknownInstance);
}

TEST(GrpoStep, SmallStepIncreasesObjective) {
  const auto data = synthetic_dataset(3, 2);
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto policy = random_policy(data, rng);
    const auto groups = random_groups(data, rng, true);
    GrpoConfig cfg;
    cfg.learning_rate = 1e-3;
    const double before = surrogate_objective(policy, groups, cfg.kl_coeff);
    grpo_step(policy, groups, cfg);
    ASSERT_GT(surrogate_objective(policy, groups, cfg.kl_coeff), before);
  }
}

TEST(GrpoStep, StiffKlPullNeverOvershoots) {
  const auto data = synthetic_dataset(2, 3);
  Rng rng(8);
  auto policy = random_policy(data, rng);
  RolloutGroup g;
  g.instance_id = data[0].id;
  g.answer_choices = {0, 1, 2};
  g.advantages = {0.0, 0.0, 0.0};
  GrpoConfig cfg;
  cfg.kl_coeff = 50.0;
  cfg.learning_rate = 1.0;
  double prev = policy.at(g.instance_id).answer.kl_to_reference();
  ASSERT_GT(prev, 0.0);
  for (int i = 0; i < 5; ++i) {
    grpo_step(policy, std::vector<RolloutGroup>{g}, cfg);
    const double kl = policy.at(g.instance_id).answer.kl_to_reference();
    ASSERT_LE(kl, prev);
    ASSERT_TRUE(std::isfinite(kl));
    prev = kl;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(GrpoStep, ZeroAdvantagesLeaveReferencePolicyUnchanged) {
  const auto data = synthetic_dataset(2, 3);
  auto policy = ToyPolicy::uniform(data, kTemplateFamilyCount);
  const auto before = policy;
  RolloutGroup g;
  g.instance_id = data[1].id;
  g.answer_choices = {0, 3};
  g.template_choices = {1, 2};
  g.advantages = {0.0, 0.0};
  grpo_step(policy, std::vector<RolloutGroup>{g}, GrpoConfig{});
  EXPECT_EQ(policy, before);
}

TEST(Synthesizer, TemplateShapes) {
  const auto inst = synthetic_dataset(1, 4)[0];
  const TrajectorySynthesizer synth;
  Rng rng(3);
  for (std::size_t f = 0; f < kTemplateFamilyCount; ++f) {
    const auto family = static_cast<TemplateFamily>(f);
    const auto shape = TrajectorySynthesizer::shape(family);
    for (int i = 0; i < 200; ++i) {
      const auto text = synth.thinking(inst, 'B', family, rng);
      const auto n = default_tokenizer().split(text).size();
      ASSERT_GE(n, shape.min_tokens) << to_string(family);
      ASSERT_LE(n, shape.max_tokens) << to_string(family);
    }
  }
  Rng r1(9), r2(9);
  EXPECT_EQ(synth.thinking(inst, 'C', TemplateFamily::Verbose, r1), synth.thinking(inst, 'C', TemplateFamily::Verbose, r2));
}

TEST(Synthesizer, VerboseRepeatsShortcutMentionsEarly) {
  const auto inst = synthetic_dataset(1, 4)[0];
  const TrajectorySynthesizer synth;
  Rng rng(1);
  auto stats_of = [&](TemplateFamily f) {
    return compute_stats(parse_trajectory(serialize_trajectory(synth.thinking(inst, 'A', f, rng), 'A', TagStyle::Think)));
  };
  EXPECT_GT(stats_of(TemplateFamily::Verbose).repetition_ratio, 0.1);
  EXPECT_LT(stats_of(TemplateFamily::Balanced).repetition_ratio, 0.1);
  const auto shortcut = parse_trajectory(
      serialize_trajectory(synth.thinking(inst, 'A', TemplateFamily::Shortcut, rng), 'A', TagStyle::Think));
  EXPECT_GT(count_option_mentions(shortcut, inst.options).per_quartile_counts[0], 0u);
}

TEST(Checkpoint, JsonRoundTrip) {
  const auto data = synthetic_dataset(4, 6);
  Rng rng(2);
  Checkpoint c{17, random_policy(data, rng)};
  const auto back = checkpoint_from_json(json::parse(checkpoint_to_json(c).dump()));
  EXPECT_EQ(back.step, 17u);
  EXPECT_EQ(back.policy, c.policy);
  auto bad = checkpoint_to_json(c);
  bad["policy"][data[0].id]["labels"] = "AB";
  EXPECT_THROW(checkpoint_from_json(bad), DataError);
  EXPECT_THROW(checkpoint_from_json(json{{"step", 1}}), DataError);
}

struct SmallRun {
  DatasetSplit split;
  GrpoConfig cfg;
  std::unique_ptr<JudgeBackend> backend = mock_judge(0);
  std::shared_ptr<JudgeCache> cache = std::make_shared<JudgeCache>();

  SmallRun() {
    split.train = synthetic_dataset(6, 9);
    cfg.total_steps = 8;
    cfg.batch_size = 3;
    cfg.learning_rate = 0.2;
    cfg.seed = 4;
  }

  TrainingReport run(TrainOptions opts = {}) {
    JudgeClient client(*backend, cache);
    return train_toy(split, cfg, CurriculumConfig{}, LengthRewardConfig{}, &client, opts);
  }
};

TEST(TrainToy, DeterministicAcrossJobCounts) {
  SmallRun a;
  SmallRun b;
  TrainOptions serial, threaded;
  threaded.jobs = 3;
  const auto ra = a.run(serial);
  const auto rb = b.run(threaded);
  EXPECT_EQ(ra.policy, rb.policy);
  ASSERT_EQ(ra.metrics.size(), 8u);
  for (std::size_t i = 0; i < ra.metrics.size(); ++i) {
    EXPECT_EQ(step_metrics_to_json(ra.metrics[i]), step_metrics_to_json(rb.metrics[i]));
  }
}

TEST(TrainToy, ResumeMatchesUninterruptedRun) {
  SmallRun full;
  const auto straight = full.run();

  SmallRun part;
  part.cfg.total_steps = 5;
  std::optional<Checkpoint> last;
  TrainOptions opts;
  opts.on_checkpoint = [&](const Checkpoint& c) { last = c; };
  part.run(opts);
  ASSERT_TRUE(last);
  EXPECT_EQ(last->step, 5u);

  SmallRun rest;
  TrainOptions resume;
  resume.resume = checkpoint_from_json(json::parse(checkpoint_to_json(*last).dump()));
  const auto resumed = rest.run(resume);
  EXPECT_EQ(resumed.policy, straight.policy);
  ASSERT_EQ(resumed.metrics.size(), 3u);
  EXPECT_EQ(step_metrics_to_json(resumed.metrics.back()), step_metrics_to_json(straight.metrics.back()));
}

TEST(TrainToy, CheckpointCadence) {
  SmallRun r;
  TrainOptions opts;
  opts.checkpoint_every = 3;
  std::vector<std::size_t> steps;
  opts.on_checkpoint = [&](const Checkpoint& c) { steps.push_back(c.step); };
  r.run(opts);
  EXPECT_EQ(steps, (std::vector<std::size_t>{3, 6, 8}));
}

TEST(TrainToy, CheckpointsBeforeBackendFailure) {
  SmallRun r;
  MockJudgeOptions failing;
  failing.fail_first = 1000;
  r.backend = mock_judge(0, failing);
  TrainOptions opts;
  std::optional<Checkpoint> last;
  opts.on_checkpoint = [&](const Checkpoint& c) { last = c; };
  EXPECT_THROW(r.run(opts), BackendUnavailable);
  ASSERT_TRUE(last);
  EXPECT_EQ(last->step, 0u);
}

TEST(TrainToy, ConfigurationErrors) {
  SmallRun r;
  r.cfg.total_steps = 700;
  EXPECT_THROW(r.run(), ConfigError);
  SmallRun empty;
  empty.split.train.clear();
  EXPECT_THROW(empty.run(), EmptyInput);
  SmallRun no_judge;
  EXPECT_THROW(train_toy(no_judge.split, no_judge.cfg, {}, {}, nullptr), ConfigError);
  TrainOptions length_only;
  length_only.mask = {false, false, true};
  EXPECT_NO_THROW(train_toy(no_judge.split, no_judge.cfg, {}, {}, nullptr, length_only));
}

TEST(TrainToy, OutcomeRewardLearnsGoldLabels) {
  SmallRun r;
  r.cfg.total_steps = 120;
  r.cfg.batch_size = 6;
  const auto report = r.run();
  EXPECT_EQ(report.train_accuracy, 1.0);
  EXPECT_GT(report.metrics.back().accuracy, report.metrics.front().accuracy);
}

}  // namespace
}  // namespace sipreward
