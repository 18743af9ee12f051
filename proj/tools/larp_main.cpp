#include <iostream>

#include "larp/cli.hpp"

int main(int argc, char** argv) { return larp::cli::run(argc, argv, std::cout, std::cerr); }
