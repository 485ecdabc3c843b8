#include "config.hpp"

#include <fstream>
#include <sstream>

#include "latreg/error.hpp"

namespace latreg::cli {

Json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error(path.string() + ": cannot open config file");
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw config_error(path.string() + ": config must be a JSON object");
  return j;
}

namespace {

bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

}  // namespace

Json merge_config(const Json& defaults, const Json& overrides, const std::string& where) {
  Json out = defaults;
  for (const auto& [key, value] : overrides.items()) {
    if (key == "command") continue;  // echoed configs carry this marker
    if (!defaults.contains(key)) {
      throw config_error(where + ": unknown config key '" + key + "'");
    }
    if (!defaults.at(key).is_null() && !same_kind(defaults.at(key), value)) {
      throw config_error(where + ": config key '" + key + "' has the wrong type");
    }
    out[key] = value;
  }
  return out;
}

void require_key(const Json& config, const std::string& key, const std::string& where) {
  if (!config.contains(key) || config.at(key).is_null()) {
    throw config_error(where + ": missing required config key '" + key + "'");
  }
}

void echo_config(const Json& effective, const std::string& command,
                 const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  Json echo;
  echo["command"] = command;
  for (const auto& [key, value] : effective.items()) echo[key] = value;
  std::ofstream out(out_dir / "effective_config.json");
  out << echo.dump(2) << '\n';
  if (!out) {
    throw data_error((out_dir / "effective_config.json").string() + ": write failed");
  }
}

std::array<double, 3> parse_triple(const std::string& text, const std::string& what) {
  std::array<double, 3> out{};
  std::string cleaned = text;
  for (auto& c : cleaned) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(cleaned);
  if (!(in >> out[0] >> out[1] >> out[2])) {
    throw config_error(what + ": expected three comma-separated numbers, got '" + text + "'");
  }
  std::string rest;
  if (in >> rest) {
    throw config_error(what + ": expected exactly three numbers, got '" + text + "'");
  }
  return out;
}

}  // namespace latreg::cli
