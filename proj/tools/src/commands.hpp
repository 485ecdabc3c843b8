#ifndef LATREG_TOOLS_COMMANDS_HPP
#define LATREG_TOOLS_COMMANDS_HPP

#include <string>

#include "config.hpp"

namespace latreg::cli {

// Each command receives the flag values that were explicitly set (keyed like
// the config schema) plus an optional config file; precedence is
// defaults < config file < flags. All return 0 on success and throw
// latreg::Error otherwise.

int cmd_grid_build(const Json& flags, const std::string& config_path,
                   const std::string& out, bool force);

int cmd_train(const Json& flags, const std::string& config_path, const std::string& out);

int cmd_genviews(const Json& flags, const std::string& config_path, const std::string& out);

int cmd_register(const Json& flags, const std::string& config_path,
                 const std::string& views_dir, const std::string& model_path,
                 const std::string& grid_path, const std::string& out);

int cmd_eval(const Json& flags, const std::string& config_path, const std::string& est_path,
             const std::string& truth_path, const std::string& out);

}  // namespace latreg::cli

#endif  // LATREG_TOOLS_COMMANDS_HPP
