#include <string>
#include <vector>

#include "clbench/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return clbench::run_cli(args);
}
