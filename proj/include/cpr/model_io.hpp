/* Copyright 2026 The CPR Engine Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cpr/pipeline.hpp"

namespace cpr {

// Single-file bundle:
//   "CPRM" | version u32 | config length u32 | config JSON
//   | section count u32 | { name length u32 | name | payload length u64 | payload }*
//   | CRC32 u32 over every preceding byte.
// Sections: "codebook", "signatures", "bank.<scale>", and "feb" + "feb.maps"
// when the foreground branch is present. All integers little-endian.
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const CprModel& model);
CprModel deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const CprModel& model, const std::filesystem::path& path);
CprModel load_model(const std::filesystem::path& path);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace cpr
