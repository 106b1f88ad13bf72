// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include "sipreward/rewards.hpp"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "sipreward/errors.hpp"

namespace sipreward {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

void check_range(double v, double lo, double hi, bool lo_open, const char* name) {
  const bool ok = std::isfinite(v) && (lo_open ? v > lo : v >= lo) && v <= hi;
  if (!ok) {
    throw ComponentOutOfRange(std::string(name) + " = " + std::to_string(v) + " outside " + (lo_open ? "(" : "[") +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

void check_binary(double v, const char* name) {
  if (v != 0.0 && v != 1.0) throw ComponentOutOfRange(std::string(name) + " must be 0 or 1, got " + std::to_string(v));
}

}  // namespace

void LengthRewardConfig::validate() const {
  require(tau_rep >= 0.0 && tau_rep <= 1.0, "length.tau_rep must lie in [0, 1]");
  require(beta > 0.0, "length.beta must be positive");
  require(l_min < l_max, "length.l_min must be below length.l_max");
  require(k > 0.0, "length.k must be positive");
}

void CurriculumConfig::validate() const {
  require(total_steps >= 1, "curriculum.total_steps must be at least 1");
  require(std::isfinite(w_out) && std::isfinite(gamma) && std::isfinite(process_scale),
          "curriculum weights must be finite");
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double repetition_reward(double rho, const LengthRewardConfig& cfg) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("repetition ratio " + std::to_string(rho) + " outside [0, 1]");
  if (rho <= cfg.tau_rep) return 1.0;
  return std::exp(-cfg.beta * (rho - cfg.tau_rep));
}

double window_reward(double length_tokens, const LengthRewardConfig& cfg) noexcept {
  return sigmoid((length_tokens - cfg.l_min) / cfg.k) * sigmoid((cfg.l_max - length_tokens) / cfg.k);
}

LengthTerms length_terms(const TrajectoryStats& stats, const LengthRewardConfig& cfg) {
  return {repetition_reward(stats.repetition_ratio, cfg),
          window_reward(static_cast<double>(stats.length_tokens), cfg)};
}

double length_reward(const TrajectoryStats& stats, const LengthRewardConfig& cfg) {
  return length_terms(stats, cfg).r_len();
}

CurriculumWeights curriculum_weights(std::size_t step, const CurriculumConfig& cfg) {
  if (step > cfg.total_steps) {
    throw StepOutOfRange("step " + std::to_string(step) + " exceeds total_steps " + std::to_string(cfg.total_steps));
  }
  const double progress = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  const double process = 1.0 + cfg.gamma * progress;
  double w_out = cfg.w_out;
  if (cfg.w_out_final) w_out += (*cfg.w_out_final - cfg.w_out) * progress;
  return {w_out, process, process};
}

int format_reward(const ParsedTrajectory& t) noexcept { return t.well_formed ? 1 : 0; }

int outcome_reward(const ParsedTrajectory& t, char gold) noexcept {
  return t.well_formed && t.answer_label && *t.answer_label == gold ? 1 : 0;
}

RewardBreakdown total_reward(const RewardInputs& in, std::size_t step, const CurriculumConfig& cur) {
  check_binary(in.r_fmt, "r_fmt");
  check_binary(in.r_out, "r_out");
  check_range(in.r_struct, 0.0, 1.0, false, "r_struct");
  check_range(in.r_content, 0.0, 1.0, false, "r_content");
  if (in.length) {
    // The window's open upper bound can round to exactly 1 in double precision.
    check_range(in.length->r_rep, 0.0, 1.0, true, "r_rep");
    check_range(in.length->r_win, 0.0, 1.0, true, "r_win");
  } else if (in.r_fmt == 1.0) {
    throw ComponentOutOfRange("length terms are required for a well-formed trajectory");
  }

  const CurriculumWeights w = curriculum_weights(step, cur);
  RewardBreakdown b;
  b.r_fmt = static_cast<int>(in.r_fmt);
  b.r_out = static_cast<int>(in.r_out);
  b.r_struct = in.r_struct;
  b.r_content = in.r_content;
  b.w_out_t = w.w_out;
  b.w_struct_t = w.w_struct;
  b.w_content_t = w.w_content;
  b.step = step;
  if (in.length) {
    b.r_rep = in.length->r_rep;
    b.r_win = in.length->r_win;
    b.r_len = in.length->r_len();
  }
  if (b.r_fmt == 0) {
    b.r_total = 0.0;
    return b;
  }
  const double process = w.w_struct * in.r_struct + w.w_content * in.r_content;
  b.r_total = (w.w_out * in.r_out + cur.process_scale * process) * *b.r_len;
  return b;
}

nlohmann::json breakdown_to_json(const RewardBreakdown& b) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"step", b.step},
          {"r_fmt", b.r_fmt},
          {"r_out", b.r_out},
          {"r_struct", b.r_struct},
          {"r_content", b.r_content},
          {"r_rep", opt(b.r_rep)},
          {"r_win", opt(b.r_win)},
          {"r_len", opt(b.r_len)},
          {"w_out_t", b.w_out_t},
          {"w_struct_t", b.w_struct_t},
          {"w_content_t", b.w_content_t},
          {"r_total", b.r_total}};
}

}  // namespace sipreward
