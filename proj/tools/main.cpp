#include "cli.hpp"

int main(int argc, char** argv) { return unmt::cli::cli_main(argc, argv); }
