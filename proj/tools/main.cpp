#include "brpatch/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return brpatch::cli_main(argc, argv, std::cout, std::cerr);
}
