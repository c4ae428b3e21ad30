#include <string>
#include <vector>

#include "pact/cli/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return pact::cli::run_command(args);
}
