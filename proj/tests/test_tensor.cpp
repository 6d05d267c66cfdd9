#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "fwionet/fwit.hpp"
#include "fwionet/ops.hpp"
#include "fwionet/tensor.hpp"
#include "test_support.hpp"

using namespace fwionet;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("shape product must equal data length") {
    CHECK_NOTHROW(TensorF::from_data({2, 3}, std::vector<float>(6, 1.f)));
    CHECK_THROWS_AS(TensorF::from_data({2, 3}, std::vector<float>(5, 1.f)), std::invalid_argument);
    CHECK_THROWS_AS(TensorF({0, 3}), std::invalid_argument);
}

TEST_CASE("finite-value detection") {
    TensorF t = TensorF::from_data({3}, {1.f, 2.f, 3.f});
    CHECK(t.all_finite());
    t.data()[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
    t.data()[1] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("sum backward gives all-ones gradient") {
    TapeD tape;
    TensorD x = TensorD::from_data({2, 3}, {1, -2, 3, 4, -5, 6}, true);
    TensorD loss = sum(&tape, x);
    tape.backward(loss);
    REQUIRE(x.has_grad());
    for (double g : x.grad_view()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("mae(x, 0) for positive x gives 1/len gradients") {
    TapeD tape;
    TensorD x = TensorD::from_data({4}, {0.5, 1.0, 2.0, 3.0}, true);
    TensorD z({4});
    TensorD loss = mae_loss(&tape, x, z);
    tape.backward(loss);
    for (double g : x.grad_view()) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("mae hand value") {
    TensorD a = TensorD::from_data({2}, {1, 2});
    TensorD b = TensorD::from_data({2}, {1, 4});
    CHECK(mae_loss<double>(nullptr, a, b).item() == doctest::Approx(1.0));
}

TEST_CASE("backward on a non-scalar refuses") {
    TapeD tape;
    TensorD x = TensorD::from_data({2}, {1, 2}, true);
    TensorD y = activation(&tape, ActKind::relu, x);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("second backward without reset refuses") {
    TapeD tape;
    TensorD x = TensorD::from_data({3}, {1, 2, 3}, true);
    TensorD loss = sum(&tape, x);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), NumericError);
    tape.reset();
    TensorD loss2 = sum(&tape, x);
    CHECK_NOTHROW(tape.backward(loss2));
}

TEST_CASE("detached loss refuses") {
    TapeD tape;
    TensorD x = TensorD::from_data({3}, {1, 2, 3}, true);
    (void)sum(&tape, x);
    TensorD detached = sum<double>(nullptr, x);
    CHECK_THROWS_AS(tape.backward(detached), NumericError);
}

TEST_CASE("tape entries replay each node exactly once") {
    TapeD tape;
    TensorD x = TensorD::from_data({2}, {3.0, 4.0}, true);
    TensorD a = activation(&tape, ActKind::relu, x);
    TensorD b = elementwise_mul(&tape, a, a);  // reuses a twice
    TensorD loss = sum(&tape, b);
    tape.backward(loss);
    // d(sum a^2)/dx = 2a * relu'(x) = 2x for positive x
    CHECK(x.grad_view()[0] == doctest::Approx(6.0));
    CHECK(x.grad_view()[1] == doctest::Approx(8.0));
}

TEST_CASE("FWIT round-trip is bit exact") {
    std::vector<std::size_t> shape{2, 3, 4};
    std::vector<float> data(24);
    Rng rng(7);
    for (auto& v : data) v = static_cast<float>(rng.uniform(-5, 5));
    std::stringstream ss;
    write_fwit(ss, shape, data.data());
    FwitArray back = read_fwit(ss);
    CHECK(back.shape == shape);
    REQUIRE(back.data.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(back.data[i] == data[i]);
}

TEST_CASE("FWIT header layout") {
    std::vector<std::size_t> shape{3};
    std::vector<float> data{1.f, 2.f, 3.f};
    std::stringstream ss;
    write_fwit(ss, shape, data.data());
    const std::string bytes = ss.str();
    REQUIRE(bytes.size() == 4 + 4 + 1 + 1 + 8 + 12);
    CHECK(bytes.substr(0, 4) == "FWIT");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);   // version LE low byte
    CHECK(static_cast<unsigned char>(bytes[8]) == 0);   // dtype f32
    CHECK(static_cast<unsigned char>(bytes[9]) == 1);   // ndim
    CHECK(static_cast<unsigned char>(bytes[10]) == 3);  // extent LE low byte
}

TEST_CASE("FWIT rejects bad magic") {
    std::stringstream ss;
    ss << "NOPE";
    CHECK_THROWS_AS(read_fwit(ss), DataError);
}

TEST_SUITE_END();
