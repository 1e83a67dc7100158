#include <string>
#include <vector>

#include "hdtreat/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return hdtreat::run_cli(args);
}
