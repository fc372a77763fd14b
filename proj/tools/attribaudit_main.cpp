#include "attribaudit/pipeline.hpp"

int main(int argc, char** argv) { return attribaudit::pipeline::run_cli(argc, argv); }
