#include <iostream>

#include "prefix_oracle/cli.hpp"

int main(int argc, char** argv) { return prefix_oracle::cli::run(argc, argv, std::cout, std::cerr); }
