#include <iostream>

#include "batchinfer/cli.hpp"

int main(int argc, char** argv) { return batchinfer::run_cli(argc, argv, std::cout, std::cerr); }
