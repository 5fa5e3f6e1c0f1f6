#include "qdspin/cli.hpp"

int main(int argc, char** argv) { return qdspin::run_cli(argc, argv); }
