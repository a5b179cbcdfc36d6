#include <string>
#include <vector>

#include "proxtune/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return proxtune::run_cli(args);
}
