#include <iostream>
#include <string>
#include <vector>

#include "qgle/cli.hpp"

int main(int argc, char** argv) {
  return qgle::dispatch(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
