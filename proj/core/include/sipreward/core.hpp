// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sipreward {

/// The six ability dimensions of the theory-of-mind taxonomy used to bucket
/// per-dimension accuracy.
enum class Ability { Belief, Desire, Emotion, Intention, Knowledge, NonLiteralCommunication };

inline constexpr std::array<Ability, 6> kAllAbilities = {
    Ability::Belief,    Ability::Desire,    Ability::Emotion,
    Ability::Intention, Ability::Knowledge, Ability::NonLiteralCommunication};

std::string_view to_string(Ability a) noexcept;

/// Exact-match parse; unknown names yield nullopt (never coerced).
std::optional<Ability> parse_ability(std::string_view name) noexcept;

struct Option {
  char label = 'A';
  std::string text;

  friend bool operator==(const Option&, const Option&) = default;
};

/// One multiple-choice benchmark item.
struct Instance {
  std::string id;
  Ability ability = Ability::Belief;
  std::optional<std::string> sub_ability;
  std::string story;
  std::string question;
  std::vector<Option> options;
  char answer = 'A';

  const Option* find_option(char label) const noexcept;

  friend bool operator==(const Instance&, const Instance&) = default;
};

/// Returns an empty string when `inst` satisfies every Instance invariant,
/// otherwise a description of the first violation.
std::string check_invariants(const Instance& inst);

struct DatasetSplit {
  std::vector<Instance> train;
  std::vector<Instance> test;
};

// JSON record form: {id, ability, sub_ability?, story, question,
// options:[{label,text}...], answer}. Throws std::invalid_argument on schema
// or invariant violations.
Instance instance_from_json(const nlohmann::json& j);
nlohmann::json instance_to_json(const Instance& inst);

/// Calls fn(record, line_no) for every JSON line, skipping blank lines and
/// metadata lines (objects with a "_provenance" or "_summary" key). Throws MalformedRecord on invalid JSON.
void for_each_record(std::string_view text, const std::function<void(const nlohmann::json&, std::size_t)>& fn);

/// Throws DataError when the file cannot be opened.
std::string read_text_file(const std::filesystem::path& path);

/// Line-delimited records, read with for_each_record.
std::vector<Instance> load_dataset(const std::filesystem::path& path);
std::vector<Instance> parse_dataset(std::string_view text);

/// One record per line, keys sorted, terminated by '\n'.
std::string serialize_dataset(const std::vector<Instance>& data);
void save_dataset(const std::filesystem::path& path, const std::vector<Instance>& data);

struct SplitOptions {
  /// Allocate train slots per ability in proportion to its share of the data.
  bool stratify_by_ability = false;
};

/// Seeded partition. Both halves keep the input order; only membership is
/// random.
DatasetSplit split_dataset(const std::vector<Instance>& data, std::size_t train_count,
                           std::uint64_t seed, SplitOptions options = {});

}  // namespace sipreward
