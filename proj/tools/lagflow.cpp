#include "lagflow/cli.hpp"

int main(int argc, char** argv) { return lagflow::cli::cli_main(argc, argv); }
