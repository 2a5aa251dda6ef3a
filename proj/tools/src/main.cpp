#include "rcl/cli.hpp"

int main(int argc, char** argv) { return rcl::cli::run(argc, argv); }
