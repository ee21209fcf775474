#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Plain `key=value` line format shared by checkpoint headers and config files.
// Blank lines and lines starting with '#' are ignored; whitespace around keys
// and values is trimmed.

namespace polyth {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_key_values(std::string_view text);

std::size_t parse_size(std::string_view key, std::string_view value);
std::uint64_t parse_u64(std::string_view key, std::string_view value);
double parse_real(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);
std::vector<std::size_t> parse_size_list(std::string_view key, std::string_view value);

}  // namespace polyth
