#include <iostream>
#include <string>
#include <vector>

#include "jnd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return jnd::cli::run(args, std::cout, std::cerr);
}
