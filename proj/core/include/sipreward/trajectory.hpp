// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sipreward/core.hpp"

namespace sipreward {

/// Which reasoning tag a trajectory is written with. Parsing accepts both;
/// the style only selects what serialize_trajectory emits.
enum class TagStyle { Think, Thinking };

std::string_view to_string(TagStyle style) noexcept;
std::optional<TagStyle> parse_tag_style(std::string_view name) noexcept;

struct ParsedTrajectory {
  std::string raw;
  std::optional<std::string> thinking;
  std::optional<char> answer_label;
  bool well_formed = false;

  friend bool operator==(const ParsedTrajectory&, const ParsedTrajectory&) = default;
};

/// Never throws. A trajectory is well formed iff, ignoring surrounding
/// whitespace, it is exactly one reasoning block followed by exactly one
/// answer block, and the answer block contains a standalone uppercase letter.
ParsedTrajectory parse_trajectory(std::string_view raw);

/// Canonical tagged form: <tag>thinking</tag><answer>X</answer>.
std::string serialize_trajectory(std::string_view thinking, char answer, TagStyle style);

/// First uppercase letter in `text` that has no alphanumeric neighbour.
std::optional<char> extract_answer_label(std::string_view text) noexcept;

/// Token-splitting adapter. Views returned point into the input text.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string_view> split(std::string_view text) const = 0;
};

/// Splits on ASCII whitespace.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::vector<std::string_view> split(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

/// Half-open token index range [begin, end).
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }
  friend bool operator==(const TokenRange&, const TokenRange&) = default;
};

using StageRanges = std::array<TokenRange, 4>;

/// Four contiguous ranges covering [0, length); earlier ranges take the
/// remainder, so 10 tokens split as {3, 3, 2, 2}.
StageRanges quartile_ranges(std::size_t length) noexcept;

/// True iff `ranges` are ordered, contiguous, and cover [0, length) exactly.
bool is_partition(const StageRanges& ranges, std::size_t length) noexcept;

inline constexpr std::size_t kDefaultNgramOrder = 3;

struct TrajectoryStats {
  std::size_t length_tokens = 0;
  double repetition_ratio = 0.0;
  std::size_t ngram_order = kDefaultNgramOrder;
  StageRanges quartile_boundaries{};
};

/// 1 - distinct/total over the n-grams of `tokens`; 0 when there are none.
double repetition_ratio(std::span<const std::string_view> tokens, std::size_t n);

/// Throws MissingThinking when the trajectory has no reasoning segment.
TrajectoryStats compute_stats(const ParsedTrajectory& t, const Tokenizer& tokenizer = default_tokenizer(),
                              std::size_t n = kDefaultNgramOrder);

enum class MentionRule {
  OptionKeyword,  // "option C", case-insensitive
  LabelPunct,     // "C." or "C)" or "(C)" at a token start
  OptionText,     // normalized full option text of at least three words
};

struct OptionMention {
  std::size_t token_index = 0;
  char label = 'A';
  MentionRule rule = MentionRule::OptionKeyword;

  friend bool operator==(const OptionMention&, const OptionMention&) = default;
};

struct OptionMentionProfile {
  std::array<std::size_t, 4> per_quartile_counts{};
  std::size_t total = 0;
  /// Chronological; at most one mention per starting token.
  std::vector<OptionMention> mentions;
  /// The ranges mentions were bucketed by.
  StageRanges stages{};
};

/// Buckets by positional quartiles of the reasoning segment.
OptionMentionProfile count_option_mentions(const ParsedTrajectory& t, std::span<const Option> options,
                                           const Tokenizer& tokenizer = default_tokenizer());

/// Buckets by caller-supplied stage ranges (e.g. from a segmentation judge).
OptionMentionProfile count_option_mentions(const ParsedTrajectory& t, std::span<const Option> options,
                                           const StageRanges& stages,
                                           const Tokenizer& tokenizer = default_tokenizer());

}  // namespace sipreward
