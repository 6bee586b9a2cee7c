#include "layerlens/cli.h"

int main(int argc, char** argv) { return layerlens::cli::run(argc, argv); }
