#include "crophybrid/cli.hpp"

int main(int argc, char** argv) { return crophybrid::cli::run(argc, argv); }
