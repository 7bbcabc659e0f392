#include <catch2/catch_amalgamated.hpp>

#include "glyphnet/blas_tune.hpp"

int main(int argc, char** argv) {
  glyphnet::tune_blas_kernels(argv);
  return Catch::Session().run(argc, argv);
}
