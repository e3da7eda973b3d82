#include "m2rec/cli.hpp"

int main(int argc, char** argv) { return m2rec::run_cli(argc, argv); }
