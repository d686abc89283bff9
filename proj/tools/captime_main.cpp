#include <iostream>

#include "captime/cli.hpp"

int main(int argc, char** argv) { return captime::run_cli(argc, argv, std::cout, std::cerr); }
