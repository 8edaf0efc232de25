#include "kwnr/commands.hpp"

#include <iostream>

int main(int argc, char **argv) {
    return kwnr::run_cli(argc, argv, std::cout, std::cerr);
}
