#include <iostream>
#include <string>
#include <vector>

#include "leafsolve/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return leafsolve::run_cli(args, std::cout, std::cerr);
}
