#include "trefree/cli.hpp"

int main(int argc, char** argv) { return trefree::cli::run(argc, argv); }
