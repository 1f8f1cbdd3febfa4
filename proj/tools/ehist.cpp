#include "ehist/cli.hpp"

int main(int argc, char** argv) { return ehist::cli::run_cli(argc, argv); }
