#include <iostream>

#include "iss/cli.hpp"

int main(int argc, char** argv) { return iss::run_cli(argc, argv, std::cout, std::cerr); }
