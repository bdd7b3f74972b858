#include <iostream>

#include "divco/cli.hpp"

int main(int argc, char** argv) { return divco::cli::run(argc, argv, std::cout, std::cerr); }
