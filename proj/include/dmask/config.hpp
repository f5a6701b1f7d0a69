#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace dmask {

/// Flat `key = value` document: one pair per line, '#' comments, optional
/// double quotes around values. No sections, no nesting.
std::map<std::string, std::string> parse_flat_config(const std::filesystem::path& file);
std::map<std::string, std::string> parse_flat_config_text(const std::string& text,
                                                          const std::string& origin);

void write_flat_config(const std::map<std::string, std::string>& kv,
                       const std::filesystem::path& file);

}  // namespace dmask
