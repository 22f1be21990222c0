#include <iostream>

#include "swarmcmd/cli.hpp"

int main(int argc, char** argv)
{
    return swarmcmd::cli::cli_main(argc, argv, std::cout, std::cerr);
}
