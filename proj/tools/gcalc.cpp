#include <iostream>

#include "gcalc/cli.hpp"

int main(int argc, char** argv) { return gcalc::cli::run(argc, argv, std::cout, std::cerr); }
