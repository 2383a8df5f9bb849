#include "attnvpr/cli.hpp"

int main(int argc, char** argv) { return attnvpr::cli::dispatch(argc, argv); }
