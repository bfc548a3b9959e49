// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

#include <json.hpp>

namespace wifipath::cli {

/// Built-in settings for every dotted config key.
nlohmann::json default_config();

/// Runs one command line and returns the process exit code. Errors are
/// reported on `err` and mapped onto the ExitCode contract.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wifipath::cli
