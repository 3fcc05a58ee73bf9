#include <iostream>

#include "lmgp/cli.hpp"

int main(int argc, char** argv) { return lmgp::run_cli(argc, argv, std::cout, std::cerr); }
