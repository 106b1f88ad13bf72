// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "sipreward/core.hpp"

namespace sipreward::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(SIPREWARD_TEST_DATA) / name;
}

inline std::string read_data(const std::string& name) { return read_text_file(data_path(name)); }

}  // namespace sipreward::testing
