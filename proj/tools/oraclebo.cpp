#include "oraclebo/cli.hpp"

int main(int argc, char** argv) { return oraclebo::cli::cli_main(argc, argv); }
