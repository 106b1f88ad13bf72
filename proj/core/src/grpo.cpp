// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include "sipreward/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "sipreward/errors.hpp"

namespace sipreward {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kTemplateFamilyCount> kFamilyNames = {"concise", "balanced", "verbose",
                                                                            "shortcut"};

// Gradient of KL(softmax(logits) || softmax(reference)) with respect to logits.
std::vector<double> kl_gradient(const PolicyHead& head) {
  const auto p = softmax(head.logits);
  const auto q = softmax(head.reference);
  const double kl = kl_divergence(p, q);
  std::vector<double> g(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    g[j] = p[j] > 0.0 ? p[j] * (std::log(p[j] / q[j]) - kl) : 0.0;
  }
  return g;
}

// Integrates d(logits)/dt = -grad KL for time `duration` with backtracked
// explicit steps, each of which must lower the KL.
void kl_flow(PolicyHead& head, double duration) {
  double remaining = duration;
  double h = 0.25;
  double kl = head.kl_to_reference();
  while (remaining > 0.0 && kl > 1e-18) {
    const double dt = std::min(h, remaining);
    const auto g = kl_gradient(head);
    PolicyHead trial = head;
    for (std::size_t j = 0; j < g.size(); ++j) trial.logits[j] -= dt * g[j];
    const double trial_kl = trial.kl_to_reference();
    if (trial_kl < kl) {
      head = std::move(trial);
      kl = trial_kl;
      remaining -= dt;
      h = std::min(0.25, 2.0 * h);
    } else {
      h *= 0.5;
      if (h < 1e-12) break;
    }
  }
}

void accumulate_group(const PolicyHead& head, std::span<const std::size_t> choices, std::span<const double> adv,
                      double kl_coeff, std::vector<double>& grad) {
  const auto p = head.probs();
  if (grad.empty()) grad.assign(p.size(), 0.0);
  const double inv_g = 1.0 / static_cast<double>(choices.size());
  for (std::size_t k = 0; k < choices.size(); ++k) {
    const double w = adv[k] * inv_g;
    grad[choices[k]] += w;
    for (std::size_t j = 0; j < p.size(); ++j) grad[j] -= w * p[j];
  }
  if (kl_coeff != 0.0) {
    const auto g = kl_gradient(head);
    for (std::size_t j = 0; j < g.size(); ++j) grad[j] -= kl_coeff * g[j];
  }
}

double group_objective(const PolicyHead& head, std::span<const std::size_t> choices, std::span<const double> adv,
                       double kl_coeff) {
  const auto p = head.probs();
  double total = 0.0;
  for (std::size_t k = 0; k < choices.size(); ++k) total += adv[k] * std::log(p[choices[k]]);
  total /= static_cast<double>(choices.size());
  return total - kl_coeff * head.kl_to_reference();
}

void check_group(const ToyPolicy& policy, const RolloutGroup& g) {
  const auto& entry = policy.at(g.instance_id);
  const std::size_t n = g.answer_choices.size();
  if (g.advantages.size() != n || (!g.trajectories.empty() && g.trajectories.size() != n) ||
      (!g.rewards.empty() && g.rewards.size() != n) ||
      (!g.template_choices.empty() && g.template_choices.size() != n)) {
    throw DataError("rollout group for " + g.instance_id + " has mismatched list lengths");
  }
  for (auto c : g.answer_choices) {
    if (c >= entry.answer.logits.size()) throw DataError("answer choice out of range for " + g.instance_id);
  }
  for (auto c : g.template_choices) {
    if (c >= entry.templ.logits.size()) throw DataError("template choice out of range for " + g.instance_id);
  }
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The exception from the
// lowest failing index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run(i);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

json head_to_json(const PolicyHead& h) { return {{"logits", h.logits}, {"reference", h.reference}}; }

PolicyHead head_from_json(const json& j) {
  return {j.at("logits").get<std::vector<double>>(), j.at("reference").get<std::vector<double>>()};
}

}  // namespace

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("grpo.group_size must be at least 2");
  if (!(kl_coeff >= 0.0)) throw ConfigError("grpo.kl_coeff must be non-negative");
  if (!(std_epsilon > 0.0)) throw ConfigError("grpo.std_epsilon must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("grpo.learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("grpo.batch_size must be at least 1");
}

std::vector<double> group_advantages(std::span<const double> rewards, double eps) {
  if (rewards.size() < 2) throw GroupTooSmall("a group needs at least 2 rewards, got " + std::to_string(rewards.size()));
  std::vector<double> adv(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) return adv;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double denom = std::sqrt(var / n) + eps;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& x : p) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : p) x /= sum;
  return p;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

double PolicyHead::kl_to_reference() const { return kl_divergence(softmax(logits), softmax(reference)); }

ToyPolicy ToyPolicy::uniform(std::span<const Instance> instances, std::size_t template_count) {
  ToyPolicy policy;
  for (const auto& inst : instances) {
    Entry e;
    for (const auto& o : inst.options) e.labels.push_back(o.label);
    e.answer.logits.assign(inst.options.size(), 0.0);
    e.answer.reference = e.answer.logits;
    e.templ.logits.assign(template_count, 0.0);
    e.templ.reference = e.templ.logits;
    policy.entries_.emplace(inst.id, std::move(e));
  }
  return policy;
}

ToyPolicy::Entry& ToyPolicy::at(const std::string& id) {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw UnknownInstance(id);
  return it->second;
}

const ToyPolicy::Entry& ToyPolicy::at(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw UnknownInstance(id);
  return it->second;
}

void ToyPolicy::snapshot_reference() {
  for (auto& [_, e] : entries_) {
    e.answer.reference = e.answer.logits;
    e.templ.reference = e.templ.logits;
  }
}

bool operator==(const ToyPolicy::Entry& a, const ToyPolicy::Entry& b) {
  return a.labels == b.labels && a.answer.logits == b.answer.logits && a.answer.reference == b.answer.reference &&
         a.templ.logits == b.templ.logits && a.templ.reference == b.templ.reference;
}

bool operator==(const ToyPolicy& a, const ToyPolicy& b) { return a.entries_ == b.entries_; }

// ---- synthesizer -----------------------------------------------------------

std::string_view to_string(TemplateFamily family) noexcept { return kFamilyNames[static_cast<std::size_t>(family)]; }

TrajectorySynthesizer::TrajectorySynthesizer() {
  static constexpr std::array<std::string_view, 32> kSyllables = {
      "ba", "ce", "di", "fo", "gu",  "ha",  "je",  "ki",  "lo",  "mu",  "na",  "pe",  "qui", "ro",  "su",  "ta",
      "ve", "wi", "xo", "yu", "za",  "bre", "cla", "dro", "fle", "gri", "plo", "shu", "tri", "vos", "zen", "mor"};
  for (auto a : kSyllables) {
    for (auto b : kSyllables) {
      vocabulary_.push_back(std::string(a) + std::string(b));
      for (auto c : kSyllables) vocabulary_.push_back(std::string(a) + std::string(b) + std::string(c));
    }
  }
}

TemplateShape TrajectorySynthesizer::shape(TemplateFamily family) noexcept {
  switch (family) {
    case TemplateFamily::Concise:
      return {100, 160};
    case TemplateFamily::Balanced:
      return {900, 1300};
    case TemplateFamily::Verbose:
      return {3200, 4000};
    case TemplateFamily::Shortcut:
      return {500, 900};
  }
  return {};
}

std::string TrajectorySynthesizer::filler(std::size_t words, Rng& rng) const {
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    out += vocabulary_[rng.uniform_index(vocabulary_.size())];
    out += (i % 12 == 11) ? ". " : " ";
  }
  return out;
}

std::string TrajectorySynthesizer::thinking(const Instance& instance, char answer, TemplateFamily family,
                                            Rng& rng) const {
  static const std::string kEncode = "First, I notice the cues the story gives about each character: ";
  static const std::string kInterpret = "Next, I interpret how the character feels and what they believe: ";
  static const std::string kGoal = "Then I clarify the goal, what the character wants here: ";
  static const std::string kLoop = "Wait, let me go over the cues once more. ";
  const std::string conclude = std::string("Therefore, the answer is ") + answer + ".";

  auto words_in = [](const std::string& s) { return default_tokenizer().split(s).size(); };
  const TemplateShape sh = shape(family);
  const std::size_t target = sh.min_tokens + rng.uniform_index(sh.max_tokens - sh.min_tokens + 1);

  std::string out;
  switch (family) {
    case TemplateFamily::Concise: {
      const std::size_t fixed = words_in(kEncode) + words_in(conclude);
      out = kEncode + filler(target > fixed ? target - fixed : 0, rng) + conclude;
      break;
    }
    case TemplateFamily::Balanced: {
      const std::size_t fixed = words_in(kEncode) + words_in(kInterpret) + words_in(kGoal) + words_in(conclude);
      const std::size_t free = target > fixed ? target - fixed : 0;
      out = kEncode + filler(free / 3, rng) + kInterpret + filler(free / 3, rng) + kGoal +
            filler(free - 2 * (free / 3), rng) + conclude;
      break;
    }
    case TemplateFamily::Verbose: {
      // About half fresh reasoning, then one chunk replayed until the target.
      const std::size_t fixed = words_in(kEncode) + words_in(kInterpret) + words_in(kGoal) + words_in(conclude);
      const std::size_t free = target > fixed ? target - fixed : 0;
      const std::size_t fresh = free / 2;
      out = kEncode + filler(fresh / 3, rng) + kInterpret + filler(fresh / 3, rng) + kGoal +
            filler(fresh - 2 * (fresh / 3), rng);
      const std::string chunk = kLoop + filler(240, rng);
      const std::size_t chunk_words = words_in(chunk);
      std::size_t written = 0;
      for (; written + chunk_words <= free - fresh; written += chunk_words) out += chunk;
      // Top up with the start of the chunk so the total lands on the target.
      const auto chunk_tokens = default_tokenizer().split(chunk);
      for (std::size_t i = 0; written < free - fresh; ++i, ++written) {
        out += std::string(chunk_tokens[i]);
        out += ' ';
      }
      out += conclude;
      break;
    }
    case TemplateFamily::Shortcut: {
      std::string intro = "The options are ";
      for (const auto& o : instance.options) intro += std::string(1, o.label) + ". " + o.text + " ";
      intro += std::string("Maybe the answer is ") + answer + ". ";
      const std::size_t pieces = 4;
      const std::size_t fixed =
          words_in(intro) + words_in(kEncode) + words_in(conclude) + pieces * words_in("But option A could also fit.");
      const std::size_t free = target > fixed ? target - fixed : 0;
      out = intro + kEncode;
      // Keep returning to the options throughout.
      for (std::size_t i = 0; i < pieces; ++i) {
        out += filler(i + 1 < pieces ? free / pieces : free - (pieces - 1) * (free / pieces), rng);
        const char other = instance.options[rng.uniform_index(instance.options.size())].label;
        out += std::string("But option ") + other + " could also fit. ";
      }
      out += conclude;
      break;
    }
  }
  return out;
}

Rollout toy_rollout(const ToyPolicy& policy, const Instance& instance, const TrajectorySynthesizer& synthesizer,
                    Rng& rng, bool learn_template, TemplateFamily fixed, TagStyle style) {
  const auto& entry = policy.at(instance.id);
  Rollout r;
  const auto p = entry.answer.probs();
  r.answer_index = rng.categorical(p);
  r.template_index = static_cast<std::size_t>(fixed);
  if (learn_template) r.template_index = rng.categorical(entry.templ.probs());
  const char label = entry.labels[r.answer_index];
  const auto thinking = synthesizer.thinking(instance, label, static_cast<TemplateFamily>(r.template_index), rng);
  r.trajectory = parse_trajectory(serialize_trajectory(thinking, label, style));
  return r;
}

// ---- optimisation ----------------------------------------------------------

double surrogate_objective(const ToyPolicy& policy, std::span<const RolloutGroup> groups, double kl_coeff) {
  double total = 0.0;
  for (const auto& g : groups) {
    check_group(policy, g);
    const auto& e = policy.at(g.instance_id);
    total += group_objective(e.answer, g.answer_choices, g.advantages, kl_coeff);
    if (!g.template_choices.empty()) total += group_objective(e.templ, g.template_choices, g.advantages, kl_coeff);
  }
  return total;
}

PolicyGradient surrogate_gradient(const ToyPolicy& policy, std::span<const RolloutGroup> groups, double kl_coeff) {
  PolicyGradient grad;
  for (const auto& g : groups) {
    check_group(policy, g);
    const auto& e = policy.at(g.instance_id);
    accumulate_group(e.answer, g.answer_choices, g.advantages, kl_coeff, grad.answer[g.instance_id]);
    if (!g.template_choices.empty()) {
      accumulate_group(e.templ, g.template_choices, g.advantages, kl_coeff, grad.templ[g.instance_id]);
    }
  }
  return grad;
}

UpdateMetrics grpo_step(ToyPolicy& policy, std::span<const RolloutGroup> groups, const GrpoConfig& cfg) {
  const double lr = cfg.learning_rate;
  const bool stiff = lr * cfg.kl_coeff > 0.25;
  const PolicyGradient grad = surrogate_gradient(policy, groups, stiff ? 0.0 : cfg.kl_coeff);

  // KL-only groups per head count, so the stiff path pulls as hard as the
  // plain gradient would.
  std::map<std::string, std::pair<std::size_t, std::size_t>> pulls;
  for (const auto& g : groups) {
    auto& [a, t] = pulls[g.instance_id];
    ++a;
    if (!g.template_choices.empty()) ++t;
  }

  auto apply = [&](PolicyHead& head, const std::vector<double>& g, std::size_t pull_count) {
    for (std::size_t j = 0; j < g.size(); ++j) head.logits[j] += lr * g[j];
    if (stiff && pull_count > 0) kl_flow(head, lr * cfg.kl_coeff * static_cast<double>(pull_count));
  };
  for (const auto& [id, g] : grad.answer) apply(policy.at(id).answer, g, pulls[id].first);
  for (const auto& [id, g] : grad.templ) apply(policy.at(id).templ, g, pulls[id].second);

  UpdateMetrics m;
  if (!pulls.empty()) {
    for (const auto& [id, _] : pulls) {
      const auto& e = policy.at(id);
      m.mean_kl += e.answer.kl_to_reference() + e.templ.kl_to_reference();
    }
    m.mean_kl /= static_cast<double>(pulls.size());
  }
  return m;
}

// ---- training --------------------------------------------------------------

json step_metrics_to_json(const StepMetrics& m) {
  return {{"step", m.step},
          {"mean_reward", m.mean_reward},
          {"accuracy", m.accuracy},
          {"mean_length", m.mean_length},
          {"mean_rho", m.mean_rho},
          {"mean_struct", m.mean_struct},
          {"mean_content", m.mean_content},
          {"mean_kl", m.mean_kl}};
}

json checkpoint_to_json(const Checkpoint& c) {
  json policy = json::object();
  for (const auto& [id, e] : c.policy.entries()) {
    policy[id] = {{"labels", std::string(e.labels.begin(), e.labels.end())},
                  {"answer", head_to_json(e.answer)},
                  {"template", head_to_json(e.templ)}};
  }
  return {{"step", c.step}, {"policy", policy}};
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    Checkpoint c;
    c.step = j.at("step").get<std::size_t>();
    for (const auto& [id, e] : j.at("policy").items()) {
      ToyPolicy::Entry entry;
      const auto labels = e.at("labels").get<std::string>();
      entry.labels.assign(labels.begin(), labels.end());
      entry.answer = head_from_json(e.at("answer"));
      entry.templ = head_from_json(e.at("template"));
      if (entry.answer.logits.size() != entry.labels.size() ||
          entry.answer.reference.size() != entry.labels.size() ||
          entry.templ.logits.size() != entry.templ.reference.size()) {
        throw DataError("checkpoint entry " + id + " has inconsistent head sizes");
      }
      c.policy.entries().emplace(id, std::move(entry));
    }
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

double greedy_accuracy(const ToyPolicy& policy, std::span<const Instance> instances) {
  if (instances.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& inst : instances) {
    const auto& e = policy.at(inst.id);
    if (e.labels[argmax(e.answer.logits)] == inst.answer) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

TrainingReport train_toy(const DatasetSplit& dataset, const GrpoConfig& cfg, const CurriculumConfig& cur,
                         const LengthRewardConfig& len_cfg, JudgeClient* client, const TrainOptions& options) {
  cfg.validate();
  cur.validate();
  len_cfg.validate();
  if (cfg.total_steps > cur.total_steps) {
    throw ConfigError("grpo.total_steps (" + std::to_string(cfg.total_steps) + ") exceeds curriculum.total_steps (" +
                      std::to_string(cur.total_steps) + ")");
  }
  const auto& train = dataset.train;
  if (train.empty()) throw EmptyInput("training split is empty");
  if ((options.mask.structural || options.mask.content) && client == nullptr) {
    throw ConfigError("process rewards are enabled but no judge backend is configured");
  }

  TrainingReport report;
  std::size_t start = 0;
  if (options.resume) {
    report.policy = options.resume->policy;
    start = options.resume->step;
    for (const auto& inst : train) {
      if (!report.policy.contains(inst.id)) throw DataError("checkpoint has no entry for " + inst.id);
    }
  } else {
    report.policy = ToyPolicy::uniform(train, kTemplateFamilyCount);
  }
  ToyPolicy& policy = report.policy;

  const TrajectorySynthesizer synthesizer;
  ScoringContext scoring;
  scoring.length = len_cfg;
  scoring.curriculum = cur;
  scoring.mask = options.mask;
  scoring.client = client;

  const std::size_t batch = std::min(cfg.batch_size, train.size());
  for (std::size_t step = start; step < cfg.total_steps; ++step) {
    Rng batch_rng(derive_seed({cfg.seed, step, 0xBA7C4ULL}));
    const auto picks = batch_rng.sample_without_replacement(train.size(), batch);

    std::vector<RolloutGroup> groups(picks.size());
    std::vector<std::vector<ScoredTrajectory>> scored(picks.size());
    try {
      parallel_for(picks.size(), options.jobs, [&](std::size_t b) {
        const Instance& inst = train[picks[b]];
        RolloutGroup& g = groups[b];
        g.instance_id = inst.id;
        for (std::size_t k = 0; k < cfg.group_size; ++k) {
          Rng rng(derive_seed({cfg.seed, step, picks[b], k}));
          Rollout r = toy_rollout(policy, inst, synthesizer, rng, cfg.learn_template, options.fixed_template,
                                  options.tag_style);
          auto s = score_trajectory(inst, r.trajectory, step, scoring);
          g.rewards.push_back(s.breakdown.r_total);
          g.answer_choices.push_back(r.answer_index);
          if (cfg.learn_template) g.template_choices.push_back(r.template_index);
          g.trajectories.push_back(std::move(r.trajectory));
          scored[b].push_back(std::move(s));
        }
        g.advantages = group_advantages(g.rewards, cfg.std_epsilon);
      });
    } catch (const BackendError&) {
      if (options.on_checkpoint) options.on_checkpoint({step, policy});
      throw;
    }

    const UpdateMetrics update = grpo_step(policy, groups, cfg);

    StepMetrics m;
    m.step = step;
    std::size_t n = 0;
    for (const auto& group : scored) {
      for (const auto& s : group) {
        ++n;
        m.mean_reward += s.breakdown.r_total;
        m.accuracy += s.breakdown.r_out;
        m.mean_struct += s.breakdown.r_struct;
        m.mean_content += s.breakdown.r_content;
        if (s.stats) {
          m.mean_length += static_cast<double>(s.stats->length_tokens);
          m.mean_rho += s.stats->repetition_ratio;
        }
      }
    }
    const double dn = static_cast<double>(n);
    m.mean_reward /= dn;
    m.accuracy /= dn;
    m.mean_length /= dn;
    m.mean_rho /= dn;
    m.mean_struct /= dn;
    m.mean_content /= dn;
    m.mean_kl = update.mean_kl;
    if (options.on_step) options.on_step(m);
    report.metrics.push_back(m);

    if (options.on_checkpoint && options.checkpoint_every > 0 && (step + 1) % options.checkpoint_every == 0 &&
        step + 1 < cfg.total_steps) {
      options.on_checkpoint({step + 1, policy});
    }
  }
  if (options.on_checkpoint) options.on_checkpoint({std::max(start, cfg.total_steps), policy});

  report.train_accuracy = greedy_accuracy(policy, train);
  double expected = 0.0;
  for (const auto& inst : train) {
    const auto& e = policy.at(inst.id);
    const auto p = e.answer.probs();
    for (std::size_t j = 0; j < e.labels.size(); ++j) {
      if (e.labels[j] == inst.answer) expected += p[j];
    }
  }
  report.train_expected_accuracy = expected / static_cast<double>(train.size());
  return report;
}

}  // namespace sipreward
