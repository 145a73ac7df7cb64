#include <iostream>

#include "retisynth/cli.hpp"

int main(int argc, char** argv) {
  return retisynth::cli_dispatch(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
