#include <iostream>

#include "refrec/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return refrec::cli::dispatch(args, std::cout, std::cerr);
}
