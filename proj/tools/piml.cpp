#include <iostream>

#include "piml/cli.hpp"

int main(int argc, char** argv) { return piml::run_cli(argc, argv, std::cout, std::cerr); }
