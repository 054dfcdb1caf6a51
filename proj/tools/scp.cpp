#include "scp/cli.hpp"

int main(int argc, char** argv) { return scp::dispatch(argc, argv); }
