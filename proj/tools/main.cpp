#include <iostream>

#include "mapexit/cli.hpp"

int main(int argc, char** argv) { return mapexit::run_cli(argc, argv, std::cout, std::cerr); }
