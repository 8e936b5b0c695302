#include <iostream>

#include "adfnet/cli.hpp"

int main(int argc, char** argv) { return adfnet::cli::run(argc, argv, std::cout, std::cerr); }
