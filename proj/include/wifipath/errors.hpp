// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace wifipath {

// Exit codes the CLI maps each error family onto.
enum class ExitCode : int {
    ok = 0,
    usage = 2,
    io = 3,
    divergence = 4,
    incompatible = 5,
};

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, ExitCode code = ExitCode::usage)
        : std::runtime_error(what), code_(code) {}

    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what, ExitCode::io) {}
};

class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& what) : Error(what, ExitCode::divergence) {}
};

class IncompatibleError : public Error {
public:
    explicit IncompatibleError(const std::string& what) : Error(what, ExitCode::incompatible) {}
};

}  // namespace wifipath
