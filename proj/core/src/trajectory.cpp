// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include "sipreward/trajectory.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

#include "sipreward/errors.hpp"

namespace sipreward {

namespace {

struct TagSet {
  std::string_view open;
  std::string_view close;
};

constexpr TagSet kThinkTags{"<think>", "</think>"};
constexpr TagSet kThinkingTags{"<thinking>", "</thinking>"};
constexpr TagSet kAnswerTags{"<answer>", "</answer>"};

bool is_space(char c) noexcept { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_alnum(char c) noexcept { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) noexcept { return c >= 'A' && c <= 'Z'; }

bool only_space(std::string_view s) noexcept {
  return std::all_of(s.begin(), s.end(), is_space);
}

std::size_t count_of(std::string_view hay, std::string_view needle) noexcept {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

// Content between the first `open` and the next `close` after it.
std::optional<std::string_view> block(std::string_view s, const TagSet& tags, std::size_t* open_at = nullptr,
                                      std::size_t* close_end = nullptr) {
  const std::size_t o = s.find(tags.open);
  if (o == std::string_view::npos) return std::nullopt;
  const std::size_t body = o + tags.open.size();
  const std::size_t c = s.find(tags.close, body);
  if (c == std::string_view::npos) return std::nullopt;
  if (open_at) *open_at = o;
  if (close_end) *close_end = c + tags.close.size();
  return s.substr(body, c - body);
}

std::string lower_copy(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Lowercase, drop ASCII punctuation and the common UTF-8 quote/dash marks.
std::string normalize_word(std::string_view token) {
  static constexpr std::string_view kUtf8Punct[] = {"\xE2\x80\x98", "\xE2\x80\x99", "\xE2\x80\x9C",
                                                    "\xE2\x80\x9D", "\xE2\x80\x94", "\xE2\x80\x93"};
  std::string out;
  out.reserve(token.size());
  for (std::size_t i = 0; i < token.size();) {
    bool skipped = false;
    if (token[i] == '\xE2') {
      for (auto p : kUtf8Punct) {
        if (token.substr(i, p.size()) == p) {
          i += p.size();
          skipped = true;
          break;
        }
      }
    }
    if (skipped) continue;
    const unsigned char c = static_cast<unsigned char>(token[i]);
    if (c >= 0x80 || std::isalnum(c)) out += static_cast<char>(std::tolower(c));
    ++i;
  }
  return out;
}

std::string_view strip_ascii_punct(std::string_view s) noexcept {
  while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool has_label(std::span<const Option> options, char label) noexcept {
  return std::any_of(options.begin(), options.end(), [label](const Option& o) { return o.label == label; });
}

// "C." / "C)" / "(C)" / "[C]." at the start of a token.
std::optional<char> label_with_punct(std::string_view token, std::span<const Option> options) noexcept {
  std::size_t i = 0;
  while (i < token.size() && (token[i] == '(' || token[i] == '[')) ++i;
  if (i + 1 >= token.size()) return std::nullopt;
  const char label = token[i];
  if (!is_upper(label) || !has_label(options, label)) return std::nullopt;
  const char next = token[i + 1];
  if (next != '.' && next != ')' && next != ']') return std::nullopt;
  if (i + 2 < token.size() && is_alnum(token[i + 2])) return std::nullopt;
  return label;
}

}  // namespace

std::string_view to_string(TagStyle style) noexcept { return style == TagStyle::Think ? "think" : "thinking"; }

std::optional<TagStyle> parse_tag_style(std::string_view name) noexcept {
  if (name == "think") return TagStyle::Think;
  if (name == "thinking") return TagStyle::Thinking;
  return std::nullopt;
}

std::optional<char> extract_answer_label(std::string_view text) noexcept {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_upper(text[i])) continue;
    const bool left_ok = i == 0 || !is_alnum(text[i - 1]);
    const bool right_ok = i + 1 == text.size() || !is_alnum(text[i + 1]);
    if (left_ok && right_ok) return text[i];
  }
  return std::nullopt;
}

ParsedTrajectory parse_trajectory(std::string_view raw) {
  ParsedTrajectory out;
  out.raw = std::string(raw);

  const bool has_think = raw.find(kThinkTags.open) != std::string_view::npos;
  const TagSet& reasoning = has_think ? kThinkTags : kThinkingTags;

  std::size_t r_open = 0, r_end = 0, a_open = 0, a_end = 0;
  auto thinking = block(raw, reasoning, &r_open, &r_end);
  auto answer = block(raw, kAnswerTags, &a_open, &a_end);
  if (thinking) out.thinking = std::string(*thinking);
  if (answer) out.answer_label = extract_answer_label(*answer);

  const bool counts_ok = count_of(raw, kThinkTags.open) + count_of(raw, kThinkingTags.open) == 1 &&
                         count_of(raw, kThinkTags.close) + count_of(raw, kThinkingTags.close) == 1 &&
                         count_of(raw, reasoning.open) == 1 && count_of(raw, reasoning.close) == 1 &&
                         count_of(raw, kAnswerTags.open) == 1 && count_of(raw, kAnswerTags.close) == 1;
  out.well_formed = counts_ok && thinking && answer && out.answer_label && r_end <= a_open &&
                    only_space(raw.substr(0, r_open)) && only_space(raw.substr(r_end, a_open - r_end)) &&
                    only_space(raw.substr(a_end));
  return out;
}

std::string serialize_trajectory(std::string_view thinking, char answer, TagStyle style) {
  const TagSet& tags = style == TagStyle::Think ? kThinkTags : kThinkingTags;
  std::string out;
  out.reserve(thinking.size() + 48);
  out.append(tags.open).append(thinking).append(tags.close);
  out.append(kAnswerTags.open).push_back(answer);
  out.append(kAnswerTags.close);
  return out;
}

std::vector<std::string_view> WhitespaceTokenizer::split(std::string_view text) const {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) tokens.push_back(text.substr(start, i - start));
  }
  return tokens;
}

const Tokenizer& default_tokenizer() {
  static const WhitespaceTokenizer tokenizer;
  return tokenizer;
}

StageRanges quartile_ranges(std::size_t length) noexcept {
  StageRanges r{};
  const std::size_t base = length / 4;
  const std::size_t extra = length % 4;
  std::size_t at = 0;
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t size = base + (q < extra ? 1 : 0);
    r[q] = {at, at + size};
    at += size;
  }
  return r;
}

bool is_partition(const StageRanges& ranges, std::size_t length) noexcept {
  std::size_t at = 0;
  for (const auto& r : ranges) {
    if (r.begin != at || r.end < r.begin) return false;
    at = r.end;
  }
  return at == length;
}

double repetition_ratio(std::span<const std::string_view> tokens, std::size_t n) {
  if (n == 0) throw DomainError("n-gram order must be at least 1");
  if (tokens.size() < n) return 0.0;
  std::unordered_map<std::string_view, std::uint32_t> vocab;
  vocab.reserve(tokens.size());
  std::vector<std::uint32_t> ids;
  ids.reserve(tokens.size());
  for (auto t : tokens) {
    auto [it, _] = vocab.try_emplace(t, static_cast<std::uint32_t>(vocab.size()));
    ids.push_back(it->second);
  }
  const std::size_t total = ids.size() - n + 1;
  const char* bytes = reinterpret_cast<const char*>(ids.data());
  std::unordered_set<std::string_view> distinct;
  distinct.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    distinct.emplace(bytes + i * sizeof(std::uint32_t), n * sizeof(std::uint32_t));
  }
  return 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total);
}

TrajectoryStats compute_stats(const ParsedTrajectory& t, const Tokenizer& tokenizer, std::size_t n) {
  if (!t.thinking) throw MissingThinking("trajectory has no reasoning segment");
  const auto tokens = tokenizer.split(*t.thinking);
  TrajectoryStats s;
  s.length_tokens = tokens.size();
  s.ngram_order = n;
  s.repetition_ratio = repetition_ratio(tokens, n);
  s.quartile_boundaries = quartile_ranges(tokens.size());
  return s;
}

OptionMentionProfile count_option_mentions(const ParsedTrajectory& t, std::span<const Option> options,
                                           const Tokenizer& tokenizer) {
  if (!t.thinking) throw MissingThinking("trajectory has no reasoning segment");
  const std::size_t length = tokenizer.split(*t.thinking).size();
  return count_option_mentions(t, options, quartile_ranges(length), tokenizer);
}

OptionMentionProfile count_option_mentions(const ParsedTrajectory& t, std::span<const Option> options,
                                           const StageRanges& stages, const Tokenizer& tokenizer) {
  if (!t.thinking) throw MissingThinking("trajectory has no reasoning segment");
  const auto tokens = tokenizer.split(*t.thinking);
  if (!is_partition(stages, tokens.size())) {
    throw DataError("stage ranges do not partition the reasoning segment");
  }

  std::vector<OptionMention> found;
  std::vector<bool> consumed(tokens.size(), false);

  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (lower_copy(strip_ascii_punct(tokens[i])) != "option") continue;
    const auto next = strip_ascii_punct(tokens[i + 1]);
    if (next.size() != 1) continue;
    const char label = static_cast<char>(std::toupper(static_cast<unsigned char>(next[0])));
    if (!has_label(options, label)) continue;
    found.push_back({i, label, MentionRule::OptionKeyword});
    consumed[i] = consumed[i + 1] = true;
  }

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (consumed[i]) continue;
    if (auto label = label_with_punct(tokens[i], options)) {
      found.push_back({i, *label, MentionRule::LabelPunct});
      consumed[i] = true;
    }
  }

  // Normalized word stream with a map back to original token indices.
  std::vector<std::string> words;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto w = normalize_word(tokens[i]);
    if (w.empty()) continue;
    words.push_back(std::move(w));
    origin.push_back(i);
  }
  for (const auto& opt : options) {
    std::vector<std::string> needle;
    for (auto tok : default_tokenizer().split(opt.text)) {
      auto w = normalize_word(tok);
      if (!w.empty()) needle.push_back(std::move(w));
    }
    if (needle.size() < 3 || needle.size() > words.size()) continue;
    for (std::size_t p = 0; p + needle.size() <= words.size(); ++p) {
      if (!std::equal(needle.begin(), needle.end(), words.begin() + static_cast<std::ptrdiff_t>(p))) continue;
      if (!consumed[origin[p]]) {
        found.push_back({origin[p], opt.label, MentionRule::OptionText});
        consumed[origin[p]] = true;
      }
      p += needle.size() - 1;
    }
  }

  std::sort(found.begin(), found.end(),
            [](const OptionMention& a, const OptionMention& b) { return a.token_index < b.token_index; });

  OptionMentionProfile profile;
  profile.stages = stages;
  profile.mentions = std::move(found);
  profile.total = profile.mentions.size();
  for (const auto& m : profile.mentions) {
    for (std::size_t q = 0; q < 4; ++q) {
      if (stages[q].contains(m.token_index)) {
        ++profile.per_quartile_counts[q];
        break;
      }
    }
  }
  return profile;
}

}  // namespace sipreward
