#include <string>
#include <vector>

#include "aput/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return aput::run_cli(std::move(args));
}
