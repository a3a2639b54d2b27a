#include "lungseg/cli.hpp"

int main(int argc, char** argv) { return lungseg::cli::run(argc, argv); }
