#include <iostream>

#include "wfm/cli_app.hpp"

int main(int argc, char** argv) { return wfm::run_cli(argc, argv, std::cout, std::cerr); }
