#include <string>
#include <vector>

#include "conns/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return conns::run_cli(args);
}
