/* Copyright 2026 The cappipe Authors. All Rights Reserved.

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

#ifndef CAPPIPE_CSV_H_
#define CAPPIPE_CSV_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cappipe::csv {

using Row = std::vector<std::string>;

// RFC-4180 parsing: quoted fields, doubled quotes, embedded newlines, CRLF.
// A leading UTF-8 byte-order mark is skipped.
std::vector<Row> Parse(std::string_view text);
std::vector<Row> ReadFile(const std::filesystem::path& path);

std::string EscapeField(std::string_view field);
std::string FormatRow(const Row& row);

}  // namespace cappipe::csv

#endif  // CAPPIPE_CSV_H_
