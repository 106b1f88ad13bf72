// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include "sipreward/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sipreward/core.hpp"
#include "sipreward/errors.hpp"
#include "sipreward/random.hpp"

namespace sipreward {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 5> kTierNames = {"S", "A", "B", "C", "D"};
constexpr std::array<std::string_view, kPriorityCount> kPriorityNames = {"P0", "P1", "P2", "P3", "P4"};

// (chosen tier, rejected tier) for P0..P3.
constexpr std::array<std::pair<TierLabel, TierLabel>, 4> kTierRules = {{
    {TierLabel::S, TierLabel::C},
    {TierLabel::A, TierLabel::C},
    {TierLabel::A, TierLabel::B},
    {TierLabel::B, TierLabel::D},
}};

bool p4_holds(const ScoredSegment& c, const ScoredSegment& r, bool cross_tier) noexcept {
  if (c.is_teacher || r.is_teacher || c.acc != 1 || r.acc != 1) return false;
  if (!cross_tier && tier_assign(c) != tier_assign(r)) return false;
  return c.source_step > r.source_step && c.length_tokens < r.length_tokens;
}

struct Candidate {
  std::size_t chosen;  // index into the canonical order
  std::size_t rejected;
  Priority priority;
};

// Keeps `keep` of `items` chosen uniformly with `rng`, preserving order.
void downsample(std::vector<Candidate>& items, std::size_t keep, Rng& rng) {
  if (keep >= items.size()) return;
  auto picks = rng.sample_without_replacement(items.size(), keep);
  std::sort(picks.begin(), picks.end());
  std::vector<Candidate> out;
  out.reserve(keep);
  for (auto i : picks) out.push_back(items[i]);
  items = std::move(out);
}

}  // namespace

void ScoredSegment::check_invariants() const {
  if (acc != 0 && acc != 1) throw DataError("segment " + trajectory_ref + ": acc must be 0 or 1");
  if (!(llm_score >= 0.0 && llm_score <= 1.0)) {
    throw DataError("segment " + trajectory_ref + ": llm_score outside [0, 1]");
  }
}

std::string_view to_string(TierLabel t) noexcept { return kTierNames[static_cast<std::size_t>(t)]; }
std::string_view to_string(Priority p) noexcept { return kPriorityNames[static_cast<std::size_t>(p)]; }

Priority parse_priority(std::string_view s) {
  for (std::size_t i = 0; i < kPriorityNames.size(); ++i) {
    if (kPriorityNames[i] == s) return static_cast<Priority>(i);
  }
  throw std::invalid_argument("unknown priority '" + std::string(s) + "'");
}

TierLabel tier_assign(const ScoredSegment& s) noexcept {
  if (s.is_teacher) return TierLabel::S;
  if (s.acc != 1) return TierLabel::D;
  if (s.llm_score >= 0.8) return TierLabel::A;
  if (s.llm_score >= 0.6) return TierLabel::B;
  return TierLabel::C;
}

bool satisfies_priority(const PreferencePair& pair, bool p4_cross_tier) noexcept {
  if (pair.chosen.instance_id != pair.rejected.instance_id) return false;
  if (pair.priority == Priority::P4) return p4_holds(pair.chosen, pair.rejected, p4_cross_tier);
  const auto [want_c, want_r] = kTierRules[static_cast<std::size_t>(pair.priority)];
  return tier_assign(pair.chosen) == want_c && tier_assign(pair.rejected) == want_r;
}

std::vector<PreferencePair> build_pairs(std::span<const ScoredSegment> segments, const PairOptions& options,
                                        std::uint64_t seed) {
  for (const auto& s : segments) s.check_invariants();
  std::vector<ScoredSegment> sorted(segments.begin(), segments.end());
  std::sort(sorted.begin(), sorted.end());

  std::array<std::vector<Candidate>, kPriorityCount> by_priority;
  for (std::size_t lo = 0; lo < sorted.size();) {
    std::size_t hi = lo;
    while (hi < sorted.size() && sorted[hi].instance_id == sorted[lo].instance_id) ++hi;
    std::set<std::pair<std::size_t, std::size_t>> taken;
    for (std::size_t p = 0; p < kPriorityCount; ++p) {
      for (std::size_t c = lo; c < hi; ++c) {
        for (std::size_t r = lo; r < hi; ++r) {
          if (c == r) continue;
          bool ok;
          if (p < kTierRules.size()) {
            ok = tier_assign(sorted[c]) == kTierRules[p].first && tier_assign(sorted[r]) == kTierRules[p].second;
          } else {
            ok = p4_holds(sorted[c], sorted[r], options.p4_cross_tier);
          }
          if (ok && taken.emplace(c, r).second) by_priority[p].push_back({c, r, static_cast<Priority>(p)});
        }
      }
    }
    lo = hi;
  }

  for (std::size_t p = 0; p < kPriorityCount; ++p) {
    if (options.caps[p]) {
      Rng rng(derive_seed({seed, 0xCA95, p}));
      downsample(by_priority[p], *options.caps[p], rng);
    }
  }

  if (options.target) {
    std::size_t total = 0;
    for (const auto& v : by_priority) total += v.size();
    if (*options.target < total) {
      // Largest-remainder apportionment; ties go to the earlier priority.
      std::array<std::size_t, kPriorityCount> quota{};
      std::array<double, kPriorityCount> rem{};
      std::size_t assigned = 0;
      for (std::size_t p = 0; p < kPriorityCount; ++p) {
        const double exact = static_cast<double>(*options.target) * static_cast<double>(by_priority[p].size()) /
                             static_cast<double>(total);
        quota[p] = static_cast<std::size_t>(std::floor(exact));
        rem[p] = exact - static_cast<double>(quota[p]);
        assigned += quota[p];
      }
      std::array<std::size_t, kPriorityCount> order{0, 1, 2, 3, 4};
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
      for (std::size_t i = 0; assigned < *options.target; i = (i + 1) % kPriorityCount) {
        const std::size_t p = order[i];
        if (quota[p] < by_priority[p].size()) {
          ++quota[p];
          ++assigned;
        }
      }
      for (std::size_t p = 0; p < kPriorityCount; ++p) {
        Rng rng(derive_seed({seed, 0x7A26, p}));
        downsample(by_priority[p], quota[p], rng);
      }
    }
  }

  std::vector<Candidate> all;
  for (const auto& v : by_priority) all.insert(all.end(), v.begin(), v.end());
  std::stable_sort(all.begin(), all.end(), [&](const Candidate& a, const Candidate& b) {
    const auto& ia = sorted[a.chosen].instance_id;
    const auto& ib = sorted[b.chosen].instance_id;
    if (ia != ib) return ia < ib;
    return a.priority < b.priority;
  });

  std::vector<PreferencePair> out;
  out.reserve(all.size());
  for (const auto& c : all) out.push_back({sorted[c.chosen], sorted[c.rejected], c.priority});
  return out;
}

double pairwise_accuracy(std::span<const PreferencePair> pairs,
                         const std::function<double(const ScoredSegment&)>& scorer) {
  if (pairs.empty()) throw EmptyPairSet("no pairs to evaluate");
  double hits = 0.0;
  for (const auto& p : pairs) {
    const double c = scorer(p.chosen);
    const double r = scorer(p.rejected);
    if (c > r) {
      hits += 1.0;
    } else if (c == r) {
      hits += 0.5;
    }
  }
  return hits / static_cast<double>(pairs.size());
}

json segment_to_json(const ScoredSegment& s) {
  return {{"instance_id", s.instance_id}, {"trajectory_ref", s.trajectory_ref}, {"acc", s.acc},
          {"llm_score", s.llm_score},     {"source_step", s.source_step},       {"length_tokens", s.length_tokens},
          {"is_teacher", s.is_teacher}};
}

ScoredSegment segment_from_json(const json& j) {
  static const std::set<std::string> kKeys = {"instance_id", "trajectory_ref", "acc",       "llm_score",
                                              "source_step", "length_tokens",  "is_teacher", "tier"};
  if (!j.is_object()) throw std::invalid_argument("segment must be an object");
  for (const auto& [k, _] : j.items()) {
    if (!kKeys.contains(k)) throw std::invalid_argument("unknown key '" + k + "'");
  }
  try {
    ScoredSegment s;
    s.instance_id = j.at("instance_id").get<std::string>();
    s.trajectory_ref = j.value("trajectory_ref", std::string());
    s.acc = j.at("acc").get<int>();
    s.llm_score = j.at("llm_score").get<double>();
    s.source_step = j.value("source_step", std::size_t{0});
    s.length_tokens = j.value("length_tokens", std::size_t{0});
    s.is_teacher = j.value("is_teacher", false);
    s.check_invariants();
    return s;
  } catch (const json::exception& e) {
    throw std::invalid_argument(e.what());
  } catch (const DataError& e) {
    throw std::invalid_argument(e.what());
  }
}

json pair_to_json(const PreferencePair& p) {
  json c = segment_to_json(p.chosen);
  c["tier"] = std::string(to_string(tier_assign(p.chosen)));
  json r = segment_to_json(p.rejected);
  r["tier"] = std::string(to_string(tier_assign(p.rejected)));
  return {{"instance_id", p.chosen.instance_id},
          {"priority", std::string(to_string(p.priority))},
          {"chosen", std::move(c)},
          {"rejected", std::move(r)}};
}

PreferencePair pair_from_json(const json& j) {
  try {
    PreferencePair p;
    p.chosen = segment_from_json(j.at("chosen"));
    p.rejected = segment_from_json(j.at("rejected"));
    p.priority = parse_priority(j.at("priority").get<std::string>());
    return p;
  } catch (const json::exception& e) {
    throw std::invalid_argument(e.what());
  }
}

std::vector<ScoredSegment> parse_segments(std::string_view text) {
  std::vector<ScoredSegment> out;
  for_each_record(text, [&](const json& j, std::size_t line_no) {
    try {
      out.push_back(segment_from_json(j));
    } catch (const std::invalid_argument& e) {
      throw MalformedRecord(line_no, e.what());
    }
  });
  return out;
}

std::vector<PreferencePair> parse_pairs(std::string_view text) {
  std::vector<PreferencePair> out;
  for_each_record(text, [&](const json& j, std::size_t line_no) {
    try {
      out.push_back(pair_from_json(j));
    } catch (const std::invalid_argument& e) {
      throw MalformedRecord(line_no, e.what());
    }
  });
  return out;
}

}  // namespace sipreward
