// SPDX-License-Identifier: Apache-2.0
#include "lavino/cli.hpp"

#include <iostream>

int main(int argc, char **argv)
{
  std::vector<std::string> args(argv + 1, argv + argc);
  return lavino::cli::run(args, std::cout, std::cerr);
}
