#include <iostream>

#include "ngfreg/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return ngfreg::run_cli(args, std::cout, std::cerr);
}
