#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"
#include "dsdf/alloc.hpp"

int main(int argc, char** argv) {
  dsdf::tune_allocator();
  doctest::Context context(argc, argv);
  return context.run();
}
