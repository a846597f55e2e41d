#include <iostream>

#include "lit/cli.hpp"

int main(int argc, char** argv) {
  return lit::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
