// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sipreward/core.hpp"
#include "sipreward/random.hpp"

namespace sipreward::testing {

// Small multiple-choice items with 4 options and a seeded gold label.
inline std::vector<Instance> synthetic_dataset(std::size_t n, std::uint64_t seed) {
  static const char* kNames[] = {"Mara", "Teo", "Ines", "Oskar", "Lena", "Ravi", "Sofia", "Jun"};
  static const char* kPlaces[] = {"the market", "a library", "the harbor", "a school gym", "the train platform"};
  Rng rng(derive_seed({seed, 0x5717}));
  std::vector<Instance> out;
  for (std::size_t i = 0; i < n; ++i) {
    Instance inst;
    inst.id = "syn-" + std::to_string(i);
    inst.ability = kAllAbilities[i % kAllAbilities.size()];
    const std::string who = kNames[rng.uniform_index(8)];
    const std::string where = kPlaces[rng.uniform_index(5)];
    inst.story = who + " walks into " + where + " and stops near the door. " + who +
                 " looks around for a friend who promised to come. Nobody waves back.";
    inst.question = "Why does " + who + " stop near the door?";
    inst.options = {{'A', who + " is searching for the friend"},
                    {'B', who + " forgot something at home"},
                    {'C', who + " wants to leave right away"},
                    {'D', who + " is waiting for the rain to stop"}};
    inst.answer = static_cast<char>('A' + rng.uniform_index(4));
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace sipreward::testing
