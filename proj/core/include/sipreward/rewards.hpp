// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>

#include <nlohmann/json_fwd.hpp>

#include "sipreward/trajectory.hpp"

namespace sipreward {

/// Shape of the efficiency reward: a repetition penalty times a smooth
/// length window.
struct LengthRewardConfig {
  double tau_rep = 0.1;  // repetition ratio tolerated without penalty
  double beta = 8.0;     // decay rate past the threshold
  double l_min = 400.0;
  double l_max = 2500.0;
  double k = 50.0;  // logistic smoothness, in tokens

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
};

/// Time-dependent weights of the composite reward.
struct CurriculumConfig {
  double w_out = 2.0;
  /// When set, the outcome weight moves linearly from w_out to this value.
  std::optional<double> w_out_final;
  double gamma = 1.0;
  std::size_t total_steps = 600;
  /// Multiplier on the whole process-reward term.
  double process_scale = 1.0;

  void validate() const;
};

struct CurriculumWeights {
  double w_out = 0.0;
  double w_struct = 0.0;
  double w_content = 0.0;

  friend bool operator==(const CurriculumWeights&, const CurriculumWeights&) = default;
};

/// Numerically stable logistic function.
double sigmoid(double x) noexcept;

/// 1 up to the threshold, exp(-beta (rho - tau)) beyond it.
/// Throws DomainError unless 0 <= rho <= 1.
double repetition_reward(double rho, const LengthRewardConfig& cfg);

double window_reward(double length_tokens, const LengthRewardConfig& cfg) noexcept;

double length_reward(const TrajectoryStats& stats, const LengthRewardConfig& cfg);

/// Throws StepOutOfRange when step > total_steps.
CurriculumWeights curriculum_weights(std::size_t step, const CurriculumConfig& cfg);

int format_reward(const ParsedTrajectory& t) noexcept;
int outcome_reward(const ParsedTrajectory& t, char gold) noexcept;

struct LengthTerms {
  double r_rep = 1.0;
  double r_win = 1.0;

  double r_len() const noexcept { return r_rep * r_win; }
};

LengthTerms length_terms(const TrajectoryStats& stats, const LengthRewardConfig& cfg);

struct RewardInputs {
  double r_fmt = 0.0;
  double r_out = 0.0;
  double r_struct = 0.0;
  double r_content = 0.0;
  /// Required when r_fmt = 1. Absent for malformed trajectories, which have
  /// nothing to measure.
  std::optional<LengthTerms> length;
};

struct RewardBreakdown {
  int r_fmt = 0;
  int r_out = 0;
  double r_struct = 0.0;
  double r_content = 0.0;
  std::optional<double> r_rep;
  std::optional<double> r_win;
  std::optional<double> r_len;
  double w_out_t = 0.0;
  double w_struct_t = 0.0;
  double w_content_t = 0.0;
  double r_total = 0.0;
  std::size_t step = 0;
};

/// r_total = r_fmt * (w_out r_out + scale (w_struct r_struct + w_content r_content)) * r_len.
/// Out-of-range components throw ComponentOutOfRange; nothing is clamped.
RewardBreakdown total_reward(const RewardInputs& in, std::size_t step, const CurriculumConfig& cur);

/// Flat record; absent length terms serialize as null.
nlohmann::json breakdown_to_json(const RewardBreakdown& b);

}  // namespace sipreward
