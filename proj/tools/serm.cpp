#include <iostream>

#include "serm/cli.hpp"

int main(int argc, char** argv) { return serm::run_cli(argc, argv, std::cout, std::cerr); }
