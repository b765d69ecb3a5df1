#include <iostream>

#include "palmctl/cli.hpp"

int main(int argc, char** argv) { return palmctl::run_cli(argc, argv, std::cout, std::cerr); }
