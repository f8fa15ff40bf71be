#include <iostream>

#include "lnet/cli/commands.hpp"

int main(int argc, char** argv) { return lnet::cli::run(argc, argv, std::cout, std::cerr); }
