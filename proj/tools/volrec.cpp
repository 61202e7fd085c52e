#include <iostream>

#include "volrec/cli.hpp"

int main(int argc, char** argv) { return volrec::run_cli(argc, argv, std::cout, std::cerr); }
