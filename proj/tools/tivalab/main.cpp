#include <iostream>

#include "tiva/cli/app.hpp"

int main(int argc, char** argv) { return tiva::cli::run(argc, argv, std::cout, std::cerr); }
