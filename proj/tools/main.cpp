#include "stochforest/cli.hpp"

int main(int argc, char** argv) { return stochforest::cli_main(argc, argv); }
