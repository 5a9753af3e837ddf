#include "fdl/cli.hpp"

int main(int argc, char** argv) { return fdl::run_cli(argc, argv); }
