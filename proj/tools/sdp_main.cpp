// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "sdp/cli.hpp"

int main(int argc, char** argv) { return sdp::cli::dispatch(argc, argv, std::cout, std::cerr); }
