#include <iostream>

#include "lasforge/cli.hpp"

int main(int argc, char** argv) { return lasforge::cli::run(argc, argv, std::cout, std::cerr); }
