// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include "run_config.hpp"

#include <cstdlib>

#include "sipreward/errors.hpp"

namespace sipreward::cli {

using nlohmann::json;

namespace {

void merge(json& base, const json& patch, const std::string& prefix, const std::string& layer,
           std::map<std::string, std::string>* origins) {
  if (!patch.is_object()) throw ConfigError(layer + ": configuration must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError(layer + ": unknown configuration key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      if (!value.is_object()) throw ConfigError(layer + ": '" + path + "' must be an object");
      merge(slot, value, path, layer, origins);
    } else {
      slot = value;
      if (origins) (*origins)[path] = layer;
    }
  }
}

void list_origins(const json& tree, const std::string& prefix, std::map<std::string, std::string>& origins) {
  for (const auto& [key, value] : tree.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      list_origins(value, path, origins);
    } else {
      origins.emplace(path, "default");
    }
  }
}

// Typed lookup that reports the dotted key on failure.
class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& at(const std::string& path) const {
    const json* node = &root_;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      node = &node->at(path.substr(start, dot - start));
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    return *node;
  }

  template <typename T>
  T get(const std::string& path) const {
    try {
      return at(path).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("configuration key '" + path + "' has the wrong type");
    }
  }

  template <typename T>
  std::optional<T> opt(const std::string& path) const {
    if (at(path).is_null()) return std::nullopt;
    return get<T>(path);
  }

  std::size_t count(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw ConfigError("configuration key '" + path + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
  }

  double real(const std::string& path) const {
    if (!at(path).is_number()) throw ConfigError("configuration key '" + path + "' must be a number");
    return at(path).get<double>();
  }

 private:
  const json& root_;
};

TemplateFamily parse_family(const std::string& s) {
  for (std::size_t i = 0; i < kTemplateFamilyCount; ++i) {
    if (to_string(static_cast<TemplateFamily>(i)) == s) return static_cast<TemplateFamily>(i);
  }
  throw ConfigError("configuration key 'grpo.fixed_template' has unknown value '" + s + "'");
}

}  // namespace

json default_tree() {
  const LengthRewardConfig len;
  const CurriculumConfig cur;
  const GrpoConfig grpo;
  const MockJudgeOptions mock;
  const JudgeClientOptions client;
  json caps = json::object();
  for (std::size_t p = 0; p < kPriorityCount; ++p) caps[std::string(to_string(static_cast<Priority>(p)))] = nullptr;
  return {
      {"seed", 0},
      {"jobs", 1},
      {"tag_style", "think"},
      {"ngram_order", kDefaultNgramOrder},
      {"length", {{"tau_rep", len.tau_rep}, {"beta", len.beta}, {"l_min", len.l_min}, {"l_max", len.l_max}, {"k", len.k}}},
      {"curriculum",
       {{"w_out", cur.w_out},
        {"w_out_final", nullptr},
        {"gamma", cur.gamma},
        {"total_steps", cur.total_steps},
        {"process_scale", cur.process_scale}}},
      {"mask", {{"structural", true}, {"content", true}, {"length", true}}},
      {"grpo",
       {{"group_size", grpo.group_size},
        {"kl_coeff", grpo.kl_coeff},
        {"learning_rate", grpo.learning_rate},
        {"total_steps", grpo.total_steps},
        {"std_epsilon", grpo.std_epsilon},
        {"batch_size", grpo.batch_size},
        {"learn_template", grpo.learn_template},
        {"fixed_template", "balanced"},
        {"train_count", nullptr},
        {"checkpoint_every", 50}}},
      {"judge",
       {{"backend", nullptr},
        {"endpoint", nullptr},
        {"model", nullptr},
        {"cache_dir", nullptr},
        {"max_in_flight", client.max_in_flight},
        {"max_attempts", client.retry.max_attempts},
        {"timeout_s", 60},
        {"rubric", "reference-free"},
        {"temperature", client.sampling.temperature},
        {"max_tokens", client.sampling.max_tokens},
        {"segmentation_fallback", client.segmentation_fallback},
        {"mock",
         {{"seed", nullptr},
          {"structural_noise", mock.structural_noise},
          {"verbosity_bias", mock.verbosity_bias},
          {"rubric_violation_rate", mock.rubric_violation_rate},
          {"decline_rate", mock.decline_rate}}}}},
      {"pairs", {{"target", nullptr}, {"caps", caps}, {"p4_cross_tier", false}}},
  };
}

json env_layer() {
  json patch = json::object();
  if (const char* url = std::getenv("JUDGE_BASE_URL"); url && *url) patch["judge"]["endpoint"] = url;
  return patch;
}

RunConfig resolve_config(const std::vector<ConfigLayer>& layers, std::string api_key,
                         std::map<std::string, std::string>* origins) {
  json tree = default_tree();
  for (const auto& layer : layers) merge(tree, layer.patch, "", layer.name, origins);
  if (origins) list_origins(tree, "", *origins);

  const Reader r(tree);
  RunConfig c;
  c.seed = r.get<std::uint64_t>("seed");
  c.jobs = r.count("jobs");
  if (c.jobs == 0) throw ConfigError("configuration key 'jobs' must be at least 1");
  const auto style = parse_tag_style(r.get<std::string>("tag_style"));
  if (!style) throw ConfigError("configuration key 'tag_style' must be 'think' or 'thinking'");
  c.tag_style = *style;
  c.ngram_order = r.count("ngram_order");
  if (c.ngram_order == 0) throw ConfigError("configuration key 'ngram_order' must be at least 1");

  c.length = {r.real("length.tau_rep"), r.real("length.beta"), r.real("length.l_min"), r.real("length.l_max"),
              r.real("length.k")};
  c.length.validate();

  c.curriculum.w_out = r.real("curriculum.w_out");
  if (!r.at("curriculum.w_out_final").is_null()) c.curriculum.w_out_final = r.real("curriculum.w_out_final");
  c.curriculum.gamma = r.real("curriculum.gamma");
  c.curriculum.total_steps = r.count("curriculum.total_steps");
  c.curriculum.process_scale = r.real("curriculum.process_scale");
  c.curriculum.validate();

  c.mask = {r.get<bool>("mask.structural"), r.get<bool>("mask.content"), r.get<bool>("mask.length")};

  c.grpo.group_size = r.count("grpo.group_size");
  c.grpo.kl_coeff = r.real("grpo.kl_coeff");
  c.grpo.learning_rate = r.real("grpo.learning_rate");
  c.grpo.total_steps = r.count("grpo.total_steps");
  c.grpo.std_epsilon = r.real("grpo.std_epsilon");
  c.grpo.batch_size = r.count("grpo.batch_size");
  c.grpo.learn_template = r.get<bool>("grpo.learn_template");
  c.grpo.seed = c.seed;
  c.grpo.validate();
  c.fixed_template = parse_family(r.get<std::string>("grpo.fixed_template"));
  if (!r.at("grpo.train_count").is_null()) c.train_count = r.count("grpo.train_count");
  c.checkpoint_every = r.count("grpo.checkpoint_every");

  const auto backend = r.opt<std::string>("judge.backend");
  const auto endpoint = r.opt<std::string>("judge.endpoint");
  if (!backend) {
    c.backend = endpoint ? RunConfig::Backend::Http : RunConfig::Backend::None;
  } else if (*backend == "mock") {
    c.backend = RunConfig::Backend::Mock;
  } else if (*backend == "http") {
    c.backend = RunConfig::Backend::Http;
  } else {
    throw ConfigError("configuration key 'judge.backend' must be 'mock' or 'http'");
  }
  c.http.base_url = endpoint.value_or("");
  c.http.model = r.opt<std::string>("judge.model").value_or("");
  c.http.api_key = std::move(api_key);
  c.http.timeout = std::chrono::seconds(r.count("judge.timeout_s"));
  c.cache_dir = r.opt<std::string>("judge.cache_dir");
  c.client.max_in_flight = r.count("judge.max_in_flight");
  if (c.client.max_in_flight == 0) throw ConfigError("configuration key 'judge.max_in_flight' must be at least 1");
  c.client.retry.max_attempts = static_cast<int>(r.count("judge.max_attempts"));
  if (c.client.retry.max_attempts == 0) throw ConfigError("configuration key 'judge.max_attempts' must be at least 1");
  const auto rubric = r.get<std::string>("judge.rubric");
  if (rubric == "reference-free") {
    c.client.rubric = RubricMode::ReferenceFree;
  } else if (rubric == "reference-compared") {
    c.client.rubric = RubricMode::ReferenceCompared;
  } else {
    throw ConfigError("configuration key 'judge.rubric' must be 'reference-free' or 'reference-compared'");
  }
  c.client.sampling.temperature = r.real("judge.temperature");
  c.client.sampling.max_tokens = static_cast<int>(r.count("judge.max_tokens"));
  c.client.segmentation_fallback = r.get<bool>("judge.segmentation_fallback");
  c.mock_seed = r.opt<std::uint64_t>("judge.mock.seed").value_or(c.seed);
  c.mock.structural_noise = r.real("judge.mock.structural_noise");
  c.mock.verbosity_bias = r.real("judge.mock.verbosity_bias");
  c.mock.rubric_violation_rate = r.real("judge.mock.rubric_violation_rate");
  c.mock.decline_rate = r.real("judge.mock.decline_rate");

  if (!r.at("pairs.target").is_null()) c.pairs.target = r.count("pairs.target");
  for (std::size_t p = 0; p < kPriorityCount; ++p) {
    const std::string key = "pairs.caps." + std::string(to_string(static_cast<Priority>(p)));
    if (!r.at(key).is_null()) c.pairs.caps[p] = r.count(key);
  }
  c.pairs.p4_cross_tier = r.get<bool>("pairs.p4_cross_tier");

  c.tree = std::move(tree);
  return c;
}

}  // namespace sipreward::cli
