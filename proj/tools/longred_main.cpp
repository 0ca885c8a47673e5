#include "longred/cli.hpp"

int main(int argc, char** argv) { return longred::run_command(argc, argv); }
