#include <iostream>

#include "declassify/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return declassify::run(args, std::cout, std::cerr);
}
