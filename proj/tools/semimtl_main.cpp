#include "semimtl/cli.hpp"

int main(int argc, char** argv) { return semimtl::cli_main(argc, argv); }
