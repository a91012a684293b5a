#include <henonlab/cli_io.hpp>

int main(int argc, char** argv) { return henon::cli_dispatch(argc, argv); }
