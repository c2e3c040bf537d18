#include <iostream>
#include <string>
#include <vector>

#include "exin/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return exin::run_cli(args, std::cout, std::cerr);
}
