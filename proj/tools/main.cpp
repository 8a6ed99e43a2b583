#include <iostream>

#include "gaitbridge/cli.hpp"

int main(int argc, char** argv) { return gaitbridge::run_cli(argc, argv, std::cout, std::cerr); }
