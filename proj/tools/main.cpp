#include "mappg/cli.hpp"

int main(int argc, char** argv) { return mappg::run_cli(argc, argv); }
