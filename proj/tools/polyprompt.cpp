#include "polyprompt/cli.hpp"

int main(int argc, char* argv[]) { return polyprompt::cli::run_cli(argc, argv); }
