#include "cli.hpp"

int main(int argc, char** argv) { return voltmargin::cli::run(argc, argv); }
