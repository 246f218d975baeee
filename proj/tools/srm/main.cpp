#include <iostream>
#include <string>
#include <vector>

#include "srm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return srm::cli::run(args, std::cout, std::cerr);
}
