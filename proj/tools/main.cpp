#include "mtpp/cli.hpp"

int main(int argc, char** argv) { return mtpp::cli::run(argc, argv); }
