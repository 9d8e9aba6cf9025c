// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "ctxprompt/cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ctxprompt::run_cli(args, std::cin, std::cout, std::cerr);
}
