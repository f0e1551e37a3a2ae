#include "simcse/cli.hpp"

int main(int argc, char** argv) { return simcse::cli::run(argc, argv); }
