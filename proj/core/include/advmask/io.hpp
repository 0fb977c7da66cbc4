// Copyright 2026 The advmask Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace advmask {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_bytes(const std::filesystem::path& path,
                 std::span<const unsigned char> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Lowercase hex SHA-1 of "blob <size>\0" followed by the content, the
/// object id git assigns to a file with these bytes.
std::string git_blob_hash(std::span<const unsigned char> bytes);
std::string git_blob_hash(const std::string& text);
std::string file_hash(const std::filesystem::path& path);

}  // namespace advmask
