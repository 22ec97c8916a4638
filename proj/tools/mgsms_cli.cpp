// Command-line front end. Subcommands are implemented in the pipeline
// headers; this file only wires argument parsing to them.
#include <cstdio>

int main(int argc, char** argv) {
    (void)argc;
    (void)argv;
    std::fprintf(stderr, "mgsms: pipeline not wired up yet\n");
    return 2;
}
