#include <iostream>

#include "ctkit/cli.hpp"

int main(int argc, char** argv) { return ctkit::run_cli(argc, argv, std::cout, std::cerr); }
