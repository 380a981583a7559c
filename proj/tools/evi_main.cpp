#include "evi/harness.hpp"

int main(int argc, char** argv) { return evi::cli_main(argc, argv); }
