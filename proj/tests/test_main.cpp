#include <gtest/gtest.h>

#include "quenchstat/backend.hpp"

int main(int argc, char** argv) {
  quenchstat::ensure_working_backend(argv);
  testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
