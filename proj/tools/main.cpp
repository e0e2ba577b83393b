#include <iostream>

#include "p2p2g/cli.hpp"

int main(int argc, char** argv) { return p2p2g::run_cli(argc, argv, std::cout, std::cerr); }
