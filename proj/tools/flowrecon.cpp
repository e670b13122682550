#include "flowrecon/cli.hpp"

int main(int argc, char **argv) { return flowrecon::run_cli(argc, argv); }
