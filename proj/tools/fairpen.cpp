#include "fairpen/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return fairpen::run_cli(argc, argv, std::cout, std::cerr);
}
