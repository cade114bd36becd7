#include "onestep/cli.hpp"

int main(int argc, char** argv) { return onestep::cli::main(argc, argv); }
