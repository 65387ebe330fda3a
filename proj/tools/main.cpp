#include <vector>

#include "opfbench/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return opfbench::cli::run(args);
}
