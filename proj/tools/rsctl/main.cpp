#include <iostream>

#include "rsctl/commands.hpp"

int main(int argc, char** argv) { return rsctl::run(argc, argv, std::cout, std::cerr); }
