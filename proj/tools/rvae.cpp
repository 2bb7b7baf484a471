#include "rvae/cli.hpp"

int main(int argc, char** argv) { return rvae::cli::run(argc, argv); }
