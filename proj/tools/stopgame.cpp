#include "stopgame/cli.hpp"

int main(int argc, char** argv) { return stopgame::cli::main(argc, argv); }
