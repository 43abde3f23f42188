#include "bitfault/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return bitfault::run_cli(argc, argv, std::cout, std::cerr); }
