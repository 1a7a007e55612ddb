#include <iostream>

#include "durn/cli.hpp"

int main(int argc, char** argv) { return durn::run_cli(argc, argv, std::cout, std::cerr); }
