// Copyright 2026 The cmbert Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CMBERT_UTF8_HPP_
#define CMBERT_UTF8_HPP_

#include <string>
#include <string_view>
#include <vector>

namespace cmbert::utf8 {

// Decodes UTF-8; malformed bytes decode to U+FFFD one byte at a time.
std::u32string decode(std::string_view text);
std::string encode(std::u32string_view cps);
std::string encode(char32_t cp);

// Code-point count of a UTF-8 string.
size_t length(std::string_view text);

// Splits into per-code-point UTF-8 substrings.
std::vector<std::string> split_chars(std::string_view text);

bool is_cjk(char32_t cp);
bool is_space(char32_t cp);
bool is_punct(char32_t cp);

}  // namespace cmbert::utf8

#endif  // CMBERT_UTF8_HPP_
