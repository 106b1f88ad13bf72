// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sipreward {

struct ScoredSegment {
  std::string instance_id;
  std::string trajectory_ref;
  int acc = 0;  // 0 or 1
  double llm_score = 0.0;
  std::size_t source_step = 0;
  std::size_t length_tokens = 0;
  bool is_teacher = false;

  /// Throws DataError when acc is not binary or llm_score is outside [0, 1].
  void check_invariants() const;

  friend bool operator==(const ScoredSegment&, const ScoredSegment&) = default;
  friend auto operator<=>(const ScoredSegment&, const ScoredSegment&) = default;
};

enum class TierLabel { S, A, B, C, D };

std::string_view to_string(TierLabel t) noexcept;

/// S for teacher segments; otherwise D when wrong, and A/B/C by the
/// half-open score bands [0.8, 1], [0.6, 0.8), [0, 0.6) when right.
TierLabel tier_assign(const ScoredSegment& s) noexcept;

enum class Priority { P0, P1, P2, P3, P4 };

inline constexpr std::size_t kPriorityCount = 5;
std::string_view to_string(Priority p) noexcept;
Priority parse_priority(std::string_view s);

struct PreferencePair {
  ScoredSegment chosen;
  ScoredSegment rejected;
  Priority priority = Priority::P0;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

struct PairOptions {
  /// Per-priority caps over the whole output. Unset means unlimited.
  std::array<std::optional<std::size_t>, kPriorityCount> caps{};
  /// Overall size target, split across priorities in proportion to their
  /// (capped) counts.
  std::optional<std::size_t> target;
  /// Let P4 pair segments of different tiers. Both sides still need acc = 1
  /// and neither may be a teacher segment.
  bool p4_cross_tier = false;
};

/// True when the pair satisfies the predicate of its priority.
bool satisfies_priority(const PreferencePair& pair, bool p4_cross_tier = false) noexcept;

/// Tier pairs P0 (S>C), P1 (A>C), P2 (A>B), P3 (B>D), then P4 (chosen has a
/// strictly later source step and is strictly shorter). A (chosen, rejected)
/// combination is emitted at most once, under its first matching priority.
/// Input order does not matter. Output is ordered by instance id, priority,
/// then chosen/rejected position in the canonical segment order. Throws
/// DataError for invalid segments.
std::vector<PreferencePair> build_pairs(std::span<const ScoredSegment> segments, const PairOptions& options = {},
                                        std::uint64_t seed = 0);

/// Fraction of pairs where scorer(chosen) > scorer(rejected), ties counting
/// one half. Throws EmptyPairSet.
double pairwise_accuracy(std::span<const PreferencePair> pairs,
                         const std::function<double(const ScoredSegment&)>& scorer);

nlohmann::json segment_to_json(const ScoredSegment& s);
/// Throws std::invalid_argument on schema violations.
ScoredSegment segment_from_json(const nlohmann::json& j);
nlohmann::json pair_to_json(const PreferencePair& p);
PreferencePair pair_from_json(const nlohmann::json& j);

/// Line-delimited readers. Throw MalformedRecord with the offending line.
std::vector<ScoredSegment> parse_segments(std::string_view text);
std::vector<PreferencePair> parse_pairs(std::string_view text);

}  // namespace sipreward
