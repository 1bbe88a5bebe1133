#include <string>
#include <vector>

#include "exconsist/cli.hpp"

int main(int argc, char** argv) {
    return exconsist::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
