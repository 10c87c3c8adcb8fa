#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace semkd::toml {

/// Parses TOML into a JSON object (via toml++). Accepts
/// any TOML document whose values are strings, numbers, booleans, arrays or
/// tables. Date-times are rejected.
nlohmann::json parse(std::string_view text, const std::string& source_name = "<string>");
nlohmann::json parse_file(const std::filesystem::path& path);

/// Parses a single TOML value (used for `key=value` overrides). Text that is
/// not a valid TOML value is taken as a bare string.
nlohmann::json parse_value(std::string_view text);

/// Emits a JSON object as TOML; scalars before sub-tables, keys sorted.
std::string dump(const nlohmann::json& object);

}  // namespace semkd::toml
