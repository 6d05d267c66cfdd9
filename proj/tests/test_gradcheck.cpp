#include <doctest.h>

#include "test_support.hpp"

TEST_SUITE_BEGIN("gradcheck");

// Five random shapes per op here; the acceptance suite runs the same harness
// at twenty-plus shapes per op.
TEST_CASE("analytic gradients match central finite differences") {
    const auto results = fwitest::op_gradcheck_suite(5, 20260810);
    for (const auto& [name, err] : results) {
        INFO("op: ", name, " max rel err ", err);
        CHECK(err < 1e-4);
    }
}

TEST_SUITE_END();
