#pragma once

#include <map>
#include <string>
#include <string_view>

namespace lumamba {

// Line-based `key = value` text. '#' starts a comment; blank lines are ignored;
// later keys override earlier ones. Throws on lines without '='.
std::map<std::string, std::string> parse_key_values(std::string_view text);
std::map<std::string, std::string> read_key_values(const std::string& path);

}  // namespace lumamba
