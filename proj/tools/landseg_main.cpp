#include "landseg/cli/commands.hpp"

int main(int argc, char** argv) { return landseg::cli::run(argc, argv); }
