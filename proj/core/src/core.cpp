// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include "sipreward/core.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "sipreward/errors.hpp"
#include "sipreward/random.hpp"

namespace sipreward {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 6> kAbilityNames = {
    "Belief", "Desire", "Emotion", "Intention", "Knowledge", "NonLiteralCommunication"};

const std::set<std::string> kInstanceKeys = {"id",       "ability", "sub_ability", "story",
                                             "question", "options", "answer"};

char parse_label(const json& j, const char* what) {
  if (!j.is_string()) throw std::invalid_argument(std::string(what) + " must be a string");
  const auto& s = j.get_ref<const std::string&>();
  if (s.size() != 1 || s[0] < 'A' || s[0] > 'Z') {
    throw std::invalid_argument(std::string(what) + " must be a single uppercase letter, got \"" + s +
                                "\"");
  }
  return s[0];
}

const std::string& require_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing key \"") + key + "\"");
  if (!it->is_string()) throw std::invalid_argument(std::string("\"") + key + "\" must be a string");
  return it->get_ref<const std::string&>();
}

}  // namespace

std::string_view to_string(Ability a) noexcept { return kAbilityNames[static_cast<std::size_t>(a)]; }

std::optional<Ability> parse_ability(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kAbilityNames.size(); ++i) {
    if (kAbilityNames[i] == name) return static_cast<Ability>(i);
  }
  return std::nullopt;
}

const Option* Instance::find_option(char label) const noexcept {
  for (const auto& o : options) {
    if (o.label == label) return &o;
  }
  return nullptr;
}

std::string check_invariants(const Instance& inst) {
  if (inst.id.empty()) return "id must be non-empty";
  if (inst.options.size() < 2) return "at least 2 options are required";
  if (inst.options.size() > 26) return "at most 26 options are supported";
  for (std::size_t i = 0; i < inst.options.size(); ++i) {
    const char expected = static_cast<char>('A' + i);
    if (inst.options[i].label != expected) {
      return std::string("option labels must be consecutive from A; position ") + std::to_string(i) +
             " has \"" + inst.options[i].label + "\", expected \"" + expected + "\"";
    }
    if (inst.options[i].text.empty()) return std::string("option ") + expected + " has empty text";
  }
  if (inst.find_option(inst.answer) == nullptr) {
    return std::string("answer \"") + inst.answer + "\" is not one of the option labels";
  }
  return {};
}

Instance instance_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kInstanceKeys.contains(key)) throw std::invalid_argument("unknown key \"" + key + "\"");
  }
  Instance inst;
  inst.id = require_string(j, "id");
  const auto& ability = require_string(j, "ability");
  auto parsed = parse_ability(ability);
  if (!parsed) throw std::invalid_argument("unknown ability \"" + ability + "\"");
  inst.ability = *parsed;
  if (auto it = j.find("sub_ability"); it != j.end()) {
    if (!it->is_string()) throw std::invalid_argument("\"sub_ability\" must be a string");
    inst.sub_ability = it->get<std::string>();
  }
  inst.story = require_string(j, "story");
  inst.question = require_string(j, "question");
  auto opts = j.find("options");
  if (opts == j.end() || !opts->is_array()) throw std::invalid_argument("\"options\" must be an array");
  for (const auto& o : *opts) {
    if (!o.is_object() || o.size() != 2 || !o.contains("label") || !o.contains("text")) {
      throw std::invalid_argument("each option must be an object with exactly \"label\" and \"text\"");
    }
    Option opt;
    opt.label = parse_label(o["label"], "option label");
    if (!o["text"].is_string()) throw std::invalid_argument("option text must be a string");
    opt.text = o["text"].get<std::string>();
    inst.options.push_back(std::move(opt));
  }
  auto ans = j.find("answer");
  if (ans == j.end()) throw std::invalid_argument("missing key \"answer\"");
  inst.answer = parse_label(*ans, "answer");
  if (auto why = check_invariants(inst); !why.empty()) throw std::invalid_argument(why);
  return inst;
}

json instance_to_json(const Instance& inst) {
  json j;
  j["id"] = inst.id;
  j["ability"] = std::string(to_string(inst.ability));
  if (inst.sub_ability) j["sub_ability"] = *inst.sub_ability;
  j["story"] = inst.story;
  j["question"] = inst.question;
  json opts = json::array();
  for (const auto& o : inst.options) opts.push_back({{"label", std::string(1, o.label)}, {"text", o.text}});
  j["options"] = std::move(opts);
  j["answer"] = std::string(1, inst.answer);
  return j;
}

void for_each_record(std::string_view text, const std::function<void(const json&, std::size_t)>& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw MalformedRecord(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (j.is_object() && (j.contains("_provenance") || j.contains("_summary"))) continue;
    fn(j, line_no);
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Instance> parse_dataset(std::string_view text) {
  std::vector<Instance> out;
  std::unordered_set<std::string> seen;
  for_each_record(text, [&](const json& j, std::size_t line_no) {
    Instance inst;
    try {
      inst = instance_from_json(j);
    } catch (const std::invalid_argument& e) {
      throw MalformedRecord(line_no, e.what());
    }
    if (!seen.insert(inst.id).second) throw DuplicateId(inst.id);
    out.push_back(std::move(inst));
  });
  return out;
}

std::vector<Instance> load_dataset(const std::filesystem::path& path) { return parse_dataset(read_text_file(path)); }

std::string serialize_dataset(const std::vector<Instance>& data) {
  std::string out;
  for (const auto& inst : data) {
    out += instance_to_json(inst).dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<Instance>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file " + path.string());
  out << serialize_dataset(data);
}

DatasetSplit split_dataset(const std::vector<Instance>& data, std::size_t train_count, std::uint64_t seed,
                           SplitOptions options) {
  if (train_count > data.size()) {
    throw InsufficientData("train_count " + std::to_string(train_count) + " exceeds dataset size " +
                           std::to_string(data.size()));
  }
  Rng rng(derive_seed({seed, 0x5b1d}));
  std::vector<bool> in_train(data.size(), false);

  if (!options.stratify_by_ability) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t i = 0; i < train_count; ++i) in_train[order[i]] = true;
  } else {
    std::map<Ability, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < data.size(); ++i) groups[data[i].ability].push_back(i);
    // Largest-remainder apportionment of train slots across abilities.
    const std::size_t n = data.size();
    std::vector<std::pair<Ability, std::size_t>> quota;
    std::vector<std::pair<std::size_t, Ability>> remainders;
    std::size_t assigned = 0;
    for (const auto& [ability, members] : groups) {
      const std::size_t scaled = train_count * members.size();
      quota.emplace_back(ability, scaled / n);
      remainders.emplace_back(scaled % n, ability);
      assigned += scaled / n;
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < train_count; ++i, ++assigned) {
      for (auto& [ability, q] : quota) {
        if (ability == remainders[i].second) ++q;
      }
    }
    for (const auto& [ability, q] : quota) {
      auto members = groups[ability];
      rng.shuffle(members);
      for (std::size_t i = 0; i < q; ++i) in_train[members[i]] = true;
    }
  }

  DatasetSplit split;
  split.train.reserve(train_count);
  split.test.reserve(data.size() - train_count);
  for (std::size_t i = 0; i < data.size(); ++i) {
    (in_train[i] ? split.train : split.test).push_back(data[i]);
  }
  return split;
}

}  // namespace sipreward
