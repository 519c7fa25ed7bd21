#include "cli/cli.hpp"

int main(int argc, char** argv) { return cxnprobe::cli::run(argc, argv); }
