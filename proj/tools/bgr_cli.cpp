#include "bgr/cli.hpp"

int main(int argc, char** argv) { return bgr::run_cli(argc, argv); }
