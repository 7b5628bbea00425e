#include "pixcorr/cli.hpp"

int main(int argc, char** argv) { return pixcorr::dispatch(argc, argv); }
