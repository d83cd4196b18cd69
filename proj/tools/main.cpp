#include <iostream>

#include "cobez/cli.hpp"

int main(int argc, char** argv) {
    return cobez::cli::run_main(argc, argv, std::cout, std::cerr);
}
