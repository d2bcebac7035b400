// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace relab {

/// Write `content` to `path` atomically (temp file in the same directory, then rename).
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// Non-empty lines of a UTF-8 text file.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Parse a JSON Lines file; line numbers (1-based) are reported on parse errors.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);

}  // namespace relab
