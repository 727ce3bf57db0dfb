#include "comatch/cli.hpp"

int main(int argc, char** argv) { return comatch::cli::main(argc, argv); }
