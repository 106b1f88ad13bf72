// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>

#include "sipreward/core.hpp"
#include "sipreward/judge.hpp"
#include "sipreward/rewards.hpp"
#include "sipreward/trajectory.hpp"

namespace sipreward {

/// Which reward components take part in the composite. Disabled process
/// terms contribute 0; a disabled length term contributes a factor of 1.
struct RewardMask {
  bool structural = true;
  bool content = true;
  bool length = true;
};

struct ScoringContext {
  LengthRewardConfig length;
  CurriculumConfig curriculum;
  RewardMask mask;
  JudgeClient* client = nullptr;
  std::size_t ngram_order = kDefaultNgramOrder;
  const Tokenizer* tokenizer = &default_tokenizer();
  /// Reference rationales by instance id, for reference-compared content judging.
  const std::map<std::string, std::string>* references = nullptr;
};

struct ScoredTrajectory {
  RewardBreakdown breakdown;
  std::optional<TrajectoryStats> stats;
  std::optional<StructuralVerdict> structural;
  std::optional<ContentVerdict> content;
};

/// Every component for one trajectory at one step. Malformed trajectories
/// skip measurement and judging and score 0.
ScoredTrajectory score_trajectory(const Instance& instance, const ParsedTrajectory& trajectory, std::size_t step,
                                  const ScoringContext& ctx);

}  // namespace sipreward
