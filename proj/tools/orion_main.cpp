#include "orion/cli.hpp"

int main(int argc, char** argv) { return orion::cli::run(argc, argv); }
