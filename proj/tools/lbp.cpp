#include "lbp/commands.hpp"

int main(int argc, char** argv) { return lbp::cli::main(argc, argv); }
