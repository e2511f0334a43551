#include <string>
#include <vector>

#include "icsurv/cli.hpp"

int main(int argc, char** argv) {
  return icsurv::cli::run(std::vector<std::string>(argv, argv + argc));
}
