#include <iostream>

#include "mpdcheck/cli.hpp"

int main(int argc, char** argv) { return mpdcheck::cli::run(argc, argv, std::cout, std::cerr); }
