#include "cli.hpp"

int main(int argc, char** argv) { return fewtreat::cli::run(argc, argv); }
