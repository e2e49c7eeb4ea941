#include "tsmooth/cli/runner.hpp"

#include <iostream>

int main(int argc, char** argv) { return tsmooth::cli::main_entry(argc, argv, std::cout, std::cerr); }
