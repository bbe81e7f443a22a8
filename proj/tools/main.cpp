#include "freqfield/cli.hpp"

int main(int argc, char** argv) { return freqfield::run_cli(argc, argv); }
