#include <iostream>

#include "vlk_cli.hpp"

int main(int argc, char** argv) { return vlk::cli::run(argc, argv, std::cout, std::cerr); }
