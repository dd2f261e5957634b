#include "pathbench/cli.hpp"

int main(int argc, char** argv) { return pathbench::run_cli(argc, argv); }
