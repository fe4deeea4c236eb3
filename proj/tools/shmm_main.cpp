#include <vector>

#include "shmm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return shmm::cli::run(args);
}
