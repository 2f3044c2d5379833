#include <iostream>

#include "ceiling/cli.hpp"

int main(int argc, char** argv) { return ceiling::cli::run_cli({argv, argv + argc}, std::cout, std::cerr); }
