#include "phantasmagoria/cli.hpp"

int main(int argc, char** argv) { return phantasmagoria::run_cli(argc, argv); }
