#include <string>
#include <vector>

#include "lagdose/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lagdose::cli::run_command(args);
}
