#pragma once

#include <cmath>

// Absolute-tolerance checks; the vendored doctest Approx is relative-only.
#define CHECK_ABS(a, b, tol) CHECK(std::abs((a) - (b)) <= (tol))
#define REQUIRE_ABS(a, b, tol) REQUIRE(std::abs((a) - (b)) <= (tol))
