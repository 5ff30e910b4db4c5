#include "cnmix/harness.hpp"

int main(int argc, char** argv) { return cnmix::harness::run_cli(argc, argv); }
