#include "bifscope/cli.hpp"

int main(int argc, char** argv) { return bifscope::cli::run(argc, argv); }
