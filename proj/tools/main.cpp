#include "tirelevel/cli.hpp"

int main(int argc, char** argv) { return tirelevel::cli::main(argc, argv); }
