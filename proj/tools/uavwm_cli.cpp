#include "uavwm/cli.hpp"

int main(int argc, char **argv) { return uavwm::cli::dispatch(argc, argv); }
