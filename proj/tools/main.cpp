#include "cli.hpp"

int main(int argc, char** argv) { return mafm::cli::run_cli(argc, argv); }
