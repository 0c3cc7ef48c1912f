#include <iostream>
#include <string>
#include <vector>

#include "disputelab/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return disputelab::cli::run(args, std::cout, std::cerr);
}
