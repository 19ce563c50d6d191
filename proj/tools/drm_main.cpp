#include <iostream>
#include <string>
#include <vector>

#include "drm/allocator.hpp"
#include "drm/cli.hpp"

int main(int argc, char** argv) {
  drm::tune_allocator();
  const std::vector<std::string> args(argv + 1, argv + argc);
  return drm::cli::main_entry(args, std::cout, std::cerr);
}
