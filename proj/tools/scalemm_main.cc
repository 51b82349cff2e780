#include "scalemm/commands.h"

int main(int argc, char** argv) { return scalemm::run_cli(argc, argv); }
