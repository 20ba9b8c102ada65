#include <iostream>

#include "kspdiff/cli.hpp"

int main(int argc, char** argv) { return kspdiff::cli::run(argc, argv, std::cout, std::cerr); }
