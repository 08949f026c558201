// Command line front end. Subcommands are implemented in lamlab/cli.hpp so
// they stay testable without spawning processes.

#include "lamlab/cli.hpp"

int main(int argc, char** argv) { return lamlab::cli::run(argc, argv); }
