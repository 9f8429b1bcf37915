#include <iostream>
#include <string>
#include <vector>

#include "abi/wf/cli.hpp"

int main(int argc, char** argv) {
    return abi::wf::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
