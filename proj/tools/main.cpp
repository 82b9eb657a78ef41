#include "sdelab/cli.hpp"

int main(int argc, char** argv) { return sdelab::cli::run(argc, argv); }
