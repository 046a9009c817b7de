#include "leads/harness/cli.hpp"

int main(int argc, char** argv)
{
    return leads::harness::run_cli(argc, argv);
}
