#ifndef LATREG_TOOLS_CONFIG_HPP
#define LATREG_TOOLS_CONFIG_HPP

#include <filesystem>
#include <string>

#include <json.hpp>

namespace latreg::cli {

using Json = nlohmann::ordered_json;

// Loads a JSON object from disk; config errors name the file.
Json load_config_file(const std::filesystem::path& path);

// Overlays `overrides` onto `defaults`. Keys absent from `defaults` are
// rejected by name; type mismatches are rejected too.
Json merge_config(const Json& defaults, const Json& overrides, const std::string& where);

// Requires `key` to be present (used for keys with no sensible default).
void require_key(const Json& config, const std::string& key, const std::string& where);

// Writes the resolved configuration (with the command recorded) into the
// output directory; every command does this so runs can be replayed.
void echo_config(const Json& effective, const std::string& command,
                 const std::filesystem::path& out_dir);

// Parses "a,b,c" into three doubles.
std::array<double, 3> parse_triple(const std::string& text, const std::string& what);

}  // namespace latreg::cli

#endif  // LATREG_TOOLS_CONFIG_HPP
