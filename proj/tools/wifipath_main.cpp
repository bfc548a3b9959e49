// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "wifipath/cli.hpp"

int main(int argc, char** argv) {
    return wifipath::cli::run(argc, argv, std::cout, std::cerr);
}
