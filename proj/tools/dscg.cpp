#include "dscg/cli.hpp"

int main(int argc, char** argv) { return dscg::run_cli(argc, argv); }
