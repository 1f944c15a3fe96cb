#include "maskforge/harness/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return maskforge::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
