#include "gsot/cli.hpp"

int main(int argc, char** argv) { return gsot::cli::run(argc, argv); }
