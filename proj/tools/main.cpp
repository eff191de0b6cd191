#include "activeanno/cli.hpp"

int main(int argc, char** argv) { return activeanno::run_cli(argc, argv); }
