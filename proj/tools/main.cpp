#include "dtnt/cli.hpp"

int main(int argc, char** argv) { return dtnt::run_cli(argc, argv); }
