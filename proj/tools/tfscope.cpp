#include "tfscope/cli.hpp"

int main(int argc, char** argv) { return tfscope::cli::run(argc, argv); }
