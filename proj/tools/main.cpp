#include "scoremean/cli.hpp"

int main(int argc, char** argv) { return scoremean::cli::run(argc, argv); }
