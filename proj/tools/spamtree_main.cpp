#include "spamtree/cli.hpp"

int main(int argc, char** argv) { return spamtree::run_cli(argc, argv); }
