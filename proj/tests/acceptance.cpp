// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sipreward/analysis.hpp"
#include "sipreward/core.hpp"
#include "sipreward/grpo.hpp"
#include "sipreward/judge.hpp"
#include "sipreward/pairs.hpp"
#include "sipreward/random.hpp"
#include "sipreward/rewards.hpp"
#include "sipreward/trajectory.hpp"
#include "synthetic.hpp"
#include "test_data.hpp"

namespace sipreward {
namespace {

using nlohmann::json;
using testing::read_data;
using testing::synthetic_dataset;

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

Outcome reward_formulas() {
  Outcome o;
  const LengthRewardConfig c;
  o.require(std::abs(repetition_reward(0.35, c) - std::exp(-2.0)) <= 1e-12, "R_rep(0.35) != exp(-2)");
  o.require(std::abs(window_reward(400, c) - sigmoid(0.0) * sigmoid(42.0)) <= 1e-12, "R_win(400)");
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double l = 2900.0 * i / 999.0;
    worst = std::max(worst, std::abs(window_reward(l, c) - window_reward(2900.0 - l, c)));
  }
  o.require(worst <= 1e-12, "R_win symmetry gap " + sci(worst));
  o.require(std::abs(repetition_reward(c.tau_rep + 1e-6, c) - repetition_reward(c.tau_rep, c)) <= 1e-4,
            "R_rep continuity");
  if (o.ok) o.detail = "max symmetry gap " + sci(worst);
  return o;
}

Outcome composite_reward() {
  Outcome o;
  const CurriculumConfig cur;
  o.require(total_reward({1, 1, 0.8, 0.6, LengthTerms{1, 1}}, 0, cur).r_total == 3.4, "worked example != 3.4");
  o.require(total_reward({0, 1, 0.8, 0.6, LengthTerms{1, 1}}, 0, cur).r_total == 0.0, "format gate");
  o.require(curriculum_weights(0, cur) == CurriculumWeights{2.0, 1.0, 1.0}, "weights at t=0");
  o.require(curriculum_weights(cur.total_steps, cur) == CurriculumWeights{2.0, 1.0 + cur.gamma, 1.0 + cur.gamma},
            "weights at t=T");
  return o;
}

Outcome advantages() {
  Outcome o;
  const auto a = group_advantages(std::vector<double>{3.4, 0, 3.4, 3.4, 0}, 1e-8);
  const double hi = 0.8164965760257652778, lo = -1.2247448640386479168;
  o.require(std::abs(a[0] - hi) <= 1e-6 && std::abs(a[2] - hi) <= 1e-6 && std::abs(a[3] - hi) <= 1e-6 &&
                std::abs(a[1] - lo) <= 1e-6 && std::abs(a[4] - lo) <= 1e-6,
            "hand-computed group");
  Rng rng(2024);
  for (int t = 0; t < 10000 && o.ok; ++t) {
    const std::size_t g = 2 + rng.uniform_index(15);
    std::vector<double> r(g);
    for (auto& x : r) x = 5.0 * rng.uniform01();
    const auto adv = group_advantages(r, 1e-12);
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(g);
    double var = 0.0;
    for (double x : adv) var += (x - mean) * (x - mean);
    var /= static_cast<double>(g);
    o.require(std::abs(mean) <= 1e-9, "mean not zero");
    o.require(std::abs(std::sqrt(var) - 1.0) <= 1e-6, "std not one");
    const double s = 0.1 + 10.0 * rng.uniform01(), b = 20.0 * rng.uniform01() - 10.0;
    std::vector<double> r2(g);
    for (std::size_t i = 0; i < g; ++i) r2[i] = s * r[i] + b;
    const auto adv2 = group_advantages(r2, 1e-12);
    for (std::size_t i = 0; i < g; ++i) o.require(std::abs(adv[i] - adv2[i]) <= 1e-6, "affine invariance");
  }
  return o;
}

Outcome gradient_check() {
  Outcome o;
  const auto data = synthetic_dataset(4, 3);
  Rng rng(99);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto policy = ToyPolicy::uniform(data, kTemplateFamilyCount);
    for (auto& [id, e] : policy.entries()) {
      for (auto* v : {&e.answer.logits, &e.answer.reference, &e.templ.logits, &e.templ.reference}) {
        for (auto& x : *v) x = 3.0 * rng.uniform01() - 1.5;
      }
    }
    std::vector<RolloutGroup> groups;
    for (int gi = 0; gi < 3; ++gi) {
      RolloutGroup g;
      g.instance_id = data[rng.uniform_index(data.size())].id;
      std::vector<double> rewards;
      for (int k = 0; k < 5; ++k) {
        g.answer_choices.push_back(rng.uniform_index(4));
        g.template_choices.push_back(rng.uniform_index(kTemplateFamilyCount));
        rewards.push_back(4.0 * rng.uniform01());
      }
      g.advantages = group_advantages(rewards, 1e-8);
      groups.push_back(std::move(g));
    }
    const double beta = 0.04 + rng.uniform01();
    const auto grad = surrogate_gradient(policy, groups, beta);
    std::vector<double> analytic, numeric;
    const double h = 1e-5;
    auto probe = [&](const std::map<std::string, std::vector<double>>& g, bool templ) {
      for (const auto& [id, gv] : g) {
        for (std::size_t j = 0; j < gv.size(); ++j) {
          auto plus = policy, minus = policy;
          (templ ? plus.at(id).templ : plus.at(id).answer).logits[j] += h;
          (templ ? minus.at(id).templ : minus.at(id).answer).logits[j] -= h;
          analytic.push_back(gv[j]);
          numeric.push_back((surrogate_objective(plus, groups, beta) - surrogate_objective(minus, groups, beta)) / (2 * h));
        }
      }
    };
    probe(grad.answer, false);
    probe(grad.templ, true);
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      norm += numeric[i] * numeric[i];
    }
    const double rel = std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
    worst = std::max(worst, rel);
  }
  o.require(worst <= 1e-4, "relative error " + sci(worst));
  if (o.ok) o.detail = "worst relative error " + sci(worst);
  return o;
}

std::string metrics_log(const TrainingReport& r) {
  std::string out;
  for (const auto& m : r.metrics) out += step_metrics_to_json(m).dump() + "\n";
  return out;
}

Outcome closed_loop() {
  Outcome o;
  const DatasetSplit split{synthetic_dataset(20, 1), {}};
  GrpoConfig cfg;
  cfg.total_steps = 300;
  auto once = [&] {
    auto backend = mock_judge(0);
    JudgeClient client(*backend, nullptr);
    return train_toy(split, cfg, CurriculumConfig{}, LengthRewardConfig{}, &client);
  };
  const auto a = once();
  const auto b = once();
  o.require(a.train_accuracy >= 0.95, "train accuracy " + std::to_string(a.train_accuracy));
  o.require(metrics_log(a) == metrics_log(b), "metric logs differ between identical runs");
  if (o.ok) o.detail = "train accuracy " + std::to_string(a.train_accuracy);
  return o;
}

Outcome reward_shaping() {
  Outcome o;
  const DatasetSplit split{synthetic_dataset(20, 1), {}};
  GrpoConfig cfg;
  cfg.total_steps = 200;
  cfg.batch_size = 20;
  cfg.learning_rate = 0.2;
  cfg.learn_template = true;
  MockJudgeOptions mock;
  mock.verbosity_bias = 0.25;
  const LengthRewardConfig len;
  auto tail = [&](bool length_on) {
    auto backend = mock_judge(0, mock);
    JudgeClient client(*backend, nullptr);
    TrainOptions opt;
    opt.mask.length = length_on;
    const auto r = train_toy(split, cfg, CurriculumConfig{}, len, &client, opt);
    const std::size_t n = r.metrics.size() / 10;
    double l = 0.0, rho = 0.0;
    for (std::size_t s = r.metrics.size() - n; s < r.metrics.size(); ++s) {
      l += r.metrics[s].mean_length;
      rho += r.metrics[s].mean_rho;
    }
    return std::make_pair(l / static_cast<double>(n), rho / static_cast<double>(n));
  };
  const auto [full_len, full_rho] = tail(true);
  const auto [abl_len, abl_rho] = tail(false);
  o.require(full_rho <= len.tau_rep + 0.05, "full-reward rho " + std::to_string(full_rho));
  o.require(full_len >= len.l_min && full_len <= len.l_max, "full-reward length " + std::to_string(full_len));
  o.require(abl_len > len.l_max, "ablated length " + std::to_string(abl_len));
  char buf[160];
  std::snprintf(buf, sizeof buf, "full L=%.0f rho=%.3f, ablated L=%.0f rho=%.3f", full_len, full_rho, abl_len, abl_rho);
  if (o.ok) o.detail = buf;
  return o;
}

Outcome pairs_oracle() {
  Outcome o;
  Rng rng(7);
  const double scores[] = {0.0, 0.5, 0.6, 0.7, 0.8, 1.0};
  for (int f = 0; f < 50 && o.ok; ++f) {
    std::vector<ScoredSegment> segs;
    const std::size_t n = 1 + rng.uniform_index(6);
    for (std::size_t i = 0; i < n; ++i) {
      segs.push_back({"q" + std::to_string(rng.uniform_index(2)), "r" + std::to_string(i),
                      static_cast<int>(rng.uniform_index(2)), scores[rng.uniform_index(6)], rng.uniform_index(4) * 100,
                      100 + rng.uniform_index(4) * 500, rng.uniform_index(5) == 0});
    }
    std::multiset<std::tuple<std::string, std::string, int>> want, got;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || segs[i].instance_id != segs[j].instance_id) continue;
        for (int p = 0; p < 5; ++p) {
          if (satisfies_priority({segs[i], segs[j], static_cast<Priority>(p)})) {
            want.emplace(segs[i].trajectory_ref, segs[j].trajectory_ref, p);
            break;
          }
        }
      }
    }
    for (const auto& p : build_pairs(segs)) {
      got.emplace(p.chosen.trajectory_ref, p.rejected.trajectory_ref, static_cast<int>(p.priority));
    }
    o.require(got == want, "fixture " + std::to_string(f) + " differs from enumeration");
  }
  const std::pair<double, TierLabel> table[] = {{0.0, TierLabel::C},
                                                {std::nextafter(0.6, 0.0), TierLabel::C},
                                                {0.6, TierLabel::B},
                                                {std::nextafter(0.8, 0.0), TierLabel::B},
                                                {0.8, TierLabel::A},
                                                {1.0, TierLabel::A}};
  for (const auto& [score, tier] : table) {
    o.require(tier_assign({"q", "r", 1, score, 0, 0, false}) == tier, "tier at " + std::to_string(score));
  }
  return o;
}

Outcome golden_traces() {
  Outcome o;
  const auto inst = parse_dataset(read_data("grimmo.jsonl")).at(0);
  const std::pair<const char*, char> cases[] = {{"grimmo_grounded.txt", 'D'},
                                                {"grimmo_ungrounded.txt", 'B'},
                                                {"grimmo_option_shortcut.txt", 'C'},
                                                {"grimmo_baseline.txt", 'C'}};
  for (const auto& [file, label] : cases) {
    const auto t = parse_trajectory(read_data(file));
    o.require(t.well_formed && t.answer_label == label, std::string(file) + " label");
  }
  const auto shortcut = count_option_mentions(parse_trajectory(read_data("grimmo_option_shortcut.txt")), inst.options);
  o.require(shortcut.total >= 5, "shortcut mentions " + std::to_string(shortcut.total));
  if (o.ok) o.detail = "shortcut trace mentions " + std::to_string(shortcut.total);
  return o;
}

Outcome perturbation() {
  Outcome o;
  const auto alex = parse_dataset(read_data("alex.jsonl")).at(0);
  const auto expected = parse_dataset(read_data("alex_perturbed_expected.jsonl")).at(0);
  const auto sets = parse_distractor_sets(read_data("alex_distractors.jsonl"));
  const auto got = perturb_instance(alex, sets.at(0).distractors);
  o.require(got == expected, "perturbed record differs from reference");
  o.require(got.question == alex.question && got.options == alex.options && got.answer == alex.answer,
            "question/options/answer changed");
  for (const auto& d : sets[0].distractors) o.require(got.story.find(d.sentence) != std::string::npos, "distractor missing");
  const auto back = parse_dataset(serialize_dataset({got})).at(0);
  o.require(back == got, "perturbed record does not round-trip");

  const std::vector<std::pair<EvalResult, EvalResult>> pairs = {
      {{"a", true, 800}, {"a-perturbed", true, 900}},
      {{"b", true, 1000}, {"b-perturbed", false, 1200}},
      {{"c", false, 1200}, {"c-perturbed", true, 1300}},
      {{"d", true, 1000}, {"d-perturbed", true, 1000}},
  };
  const auto r = robustness_study(pairs);
  o.require(std::abs(r.original_accuracy - 0.75) <= 1e-9, "original accuracy");
  o.require(std::abs(r.perturbed_accuracy - 0.75) <= 1e-9, "perturbed accuracy");
  o.require(r.retention && std::abs(*r.retention - 2.0 / 3.0) <= 1e-9, "retention");
  o.require(std::abs(r.length_drift - 100.0) <= 1e-9, "length drift");
  o.require(r.length_drift_percent && std::abs(*r.length_drift_percent - 10.0) <= 1e-9, "length drift percent");
  return o;
}

Outcome judge_plumbing() {
  Outcome o;
  const auto inst = parse_dataset(read_data("grimmo.jsonl")).at(0);
  std::vector<JudgeRequest> unique;
  for (const char* f : {"grimmo_grounded.txt", "grimmo_ungrounded.txt", "grimmo_option_shortcut.txt"}) {
    unique.push_back({JudgeKind::Structural, inst, parse_trajectory(read_data(f)), std::nullopt});
    unique.push_back({JudgeKind::Content, inst, parse_trajectory(read_data(f)), std::nullopt});
  }
  auto backend = mock_judge(0);
  JudgeClient client(*backend, std::make_shared<JudgeCache>());
  for (int rep = 0; rep < 4; ++rep) {
    for (const auto& r : unique) {
      if (r.kind == JudgeKind::Structural) {
        structural_score(r, client);
      } else {
        content_score(r, client);
      }
    }
  }
  o.require(client.backend_calls() == unique.size(),
            "backend calls " + std::to_string(client.backend_calls()) + " for " + std::to_string(unique.size()) +
                " unique requests");

  MockJudgeOptions noisy;
  noisy.rubric_violation_rate = 0.5;
  auto mock = mock_judge(11, noisy);
  JudgeClient plain(*mock, nullptr);
  Rng rng(5);
  std::size_t clamped = 0;
  for (int i = 0; i < 1000 && o.ok; ++i) {
    const char label = static_cast<char>('A' + rng.uniform_index(4));
    const JudgeRequest r{JudgeKind::Content, inst,
                         parse_trajectory(serialize_trajectory("case " + std::to_string(i), label, TagStyle::Think)),
                         std::nullopt};
    const auto v = content_score(r, plain);
    o.require(v.score >= 0.0 && v.score <= tier_cap(v.tier), "verdict above its tier cap");
    clamped += v.clamped;
  }
  if (o.ok) o.detail = std::to_string(clamped) + " of 1000 verdicts clamped";
  return o;
}

}  // namespace
}  // namespace sipreward

int main() {
  using namespace sipreward;
  const std::vector<Criterion> criteria = {
      {1, "reward formulas", 1.0, reward_formulas},
      {2, "composite reward and curriculum", 1.0, composite_reward},
      {3, "group advantages", 5.0, advantages},
      {4, "policy gradient check", 10.0, gradient_check},
      {5, "closed-loop training", 60.0, closed_loop},
      {6, "length shaping effect", 120.0, reward_shaping},
      {7, "pair construction oracle", 5.0, pairs_oracle},
      {8, "trajectory golden files", 1.0, golden_traces},
      {9, "perturbation harness", 1.0, perturbation},
      {10, "judge plumbing", 5.0, judge_plumbing},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.ok && secs > c.budget_s) {
      o.ok = false;
      o.detail = "over time budget";
    }
    failed += !o.ok;
    std::printf("%s  %2d  %-34s %7.2fs / %4.0fs  %s\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs, c.budget_s,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
