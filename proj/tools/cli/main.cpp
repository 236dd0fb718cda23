#include "commands.hpp"

int main(int argc, char** argv) { return retrank::cli::run(argc, argv); }
