#include <iostream>
#include <string>
#include <vector>

#include "obstudy/workspace.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return obstudy::run_cli(args, std::cout, std::cerr);
}
