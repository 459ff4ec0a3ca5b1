#include "flowmoe/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return flowmoe::run_cli(argc, argv, std::cout, std::cerr); }
