// SPDX-License-Identifier: Apache-2.0
#include "fdkd/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return fdkd::cli::dispatch(argc, argv, std::cout, std::cerr); }
