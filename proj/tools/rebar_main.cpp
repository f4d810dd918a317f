#include <string>
#include <vector>

#include "rebar/cli.hpp"

int main(int argc, char** argv) { return rebar::run_cli(std::vector<std::string>(argv + 1, argv + argc)); }
