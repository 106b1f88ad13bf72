// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sipreward/grpo.hpp"
#include "sipreward/judge.hpp"
#include "sipreward/pairs.hpp"
#include "sipreward/rewards.hpp"
#include "sipreward/scoring.hpp"

namespace sipreward::cli {

/// Fully resolved settings for one invocation.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  TagStyle tag_style = TagStyle::Think;
  std::size_t ngram_order = kDefaultNgramOrder;
  LengthRewardConfig length;
  CurriculumConfig curriculum;
  RewardMask mask;
  GrpoConfig grpo;
  TemplateFamily fixed_template = TemplateFamily::Balanced;
  std::optional<std::size_t> train_count;
  std::size_t checkpoint_every = 50;

  enum class Backend { None, Mock, Http };
  Backend backend = Backend::None;
  HttpJudgeConfig http;  // api_key comes only from the environment
  std::optional<std::string> cache_dir;
  JudgeClientOptions client;
  std::uint64_t mock_seed = 0;
  MockJudgeOptions mock;

  PairOptions pairs;

  /// The merged settings tree. Never contains secrets.
  nlohmann::json tree;
};

/// The default settings tree. Every accepted key appears here.
nlohmann::json default_tree();

/// One override layer, applied in order over the defaults.
struct ConfigLayer {
  std::string name;  // "file", "env", "flags"
  nlohmann::json patch;
};

/// Merges layers over the defaults and converts the result. Throws
/// ConfigError naming the first unknown key or mistyped value.
RunConfig resolve_config(const std::vector<ConfigLayer>& layers, std::string api_key = {},
                         std::map<std::string, std::string>* origins = nullptr);

/// Overrides taken from JUDGE_BASE_URL.
nlohmann::json env_layer();

}  // namespace sipreward::cli
