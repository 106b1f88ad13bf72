// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include "sipreward/scoring.hpp"

#include "sipreward/errors.hpp"

namespace sipreward {

ScoredTrajectory score_trajectory(const Instance& instance, const ParsedTrajectory& trajectory, std::size_t step,
                                  const ScoringContext& ctx) {
  ScoredTrajectory out;
  RewardInputs in;
  in.r_fmt = format_reward(trajectory);
  in.r_out = outcome_reward(trajectory, instance.answer);

  if (in.r_fmt == 1.0) {
    out.stats = compute_stats(trajectory, *ctx.tokenizer, ctx.ngram_order);
    in.length = ctx.mask.length ? length_terms(*out.stats, ctx.length) : LengthTerms{1.0, 1.0};

    if ((ctx.mask.structural || ctx.mask.content) && ctx.client == nullptr) {
      throw ConfigError("process rewards are enabled but no judge backend is configured");
    }
    if (ctx.mask.structural) {
      JudgeRequest req{JudgeKind::Structural, instance, trajectory, std::nullopt};
      out.structural = structural_score(req, *ctx.client);
      in.r_struct = out.structural->score;
    }
    if (ctx.mask.content) {
      JudgeRequest req{JudgeKind::Content, instance, trajectory, std::nullopt};
      if (ctx.references) {
        if (auto it = ctx.references->find(instance.id); it != ctx.references->end()) req.reference_rationale = it->second;
      }
      out.content = content_score(req, *ctx.client);
      in.r_content = out.content->score;
    }
  }
  out.breakdown = total_reward(in, step, ctx.curriculum);
  return out;
}

}  // namespace sipreward
