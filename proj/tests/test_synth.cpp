#include "doctest.h"

TEST_SUITE_BEGIN("synth");
TEST_SUITE_END();
