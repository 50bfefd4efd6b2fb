#include <iostream>

#include "bvsrik/cli.hpp"

int main(int argc, char** argv) { return bvsrik::parse_and_dispatch(argc, argv, std::cout, std::cerr); }
