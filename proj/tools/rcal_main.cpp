#include <string>
#include <vector>

#include "rcal/cli.hpp"

int main(int argc, char** argv) {
  return rcal::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
