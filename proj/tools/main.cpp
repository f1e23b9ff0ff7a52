#include <iostream>

#include "msmt/cli.hpp"

int main(int argc, char** argv) { return msmt::cli::run(argc, argv, std::cout, std::cerr); }
