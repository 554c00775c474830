#include <iostream>

#include "cmlab/cli.hpp"

int main(int argc, char** argv) { return cmlab::run_cli(argc, argv, std::cout, std::cerr); }
