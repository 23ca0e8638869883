#include "bgfg/cli.hpp"

int main(int argc, char** argv) { return bgfg::run_command(argc, argv); }
