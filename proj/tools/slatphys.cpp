#include "slatphys/cli.hpp"

int main(int argc, char** argv) { return slatphys::run_command(argc, argv); }
