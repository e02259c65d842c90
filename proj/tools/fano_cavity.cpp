#include <string>
#include <vector>

#include "fanocav/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return fanocav::cli::run(args);
}
