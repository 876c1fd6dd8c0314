#include "pnr/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return pnr::run_cli(argc, argv, std::cout, std::cerr); }
