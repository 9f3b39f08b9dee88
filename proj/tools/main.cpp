#include "relaxeq/cli.hpp"

int main(int argc, char** argv) { return relaxeq::cli::run(argc, argv); }
