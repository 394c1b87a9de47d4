#include "afusion/cli.hpp"

int main(int argc, char** argv) { return afusion::cli_main(argc, argv); }
