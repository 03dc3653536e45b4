#include <string>
#include <vector>

#include "mfdg/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return mfdg::cli::run(std::move(args));
}
