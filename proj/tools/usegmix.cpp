#include "usegmix/cli.hpp"

int main(int argc, char** argv) { return usegmix::cli::run(argc, argv); }
