#include "cli.hpp"

int main(int argc, char** argv) { return cbie::cli::run(argc, argv); }
