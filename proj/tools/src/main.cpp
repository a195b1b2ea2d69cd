#include <iostream>

#include "adopt/cli.hpp"

int main(int argc, char** argv) { return adopt::cli::run(argc, argv, std::cout, std::cerr); }
