#include <doctest.h>

#include <cmath>

#include "scenetok/tensor.hpp"

using namespace scenetok;

TEST_CASE("tensor construction and indexing") {
    Tensor t({2, 3});
    CHECK(t.rank() == 2);
    CHECK(t.size() == 6);
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(1) == 3);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

    t.at(1, 2) = 7.5;
    CHECK(t[5] == 7.5);
    CHECK(t.at(1, 2) == 7.5);
    CHECK(t.offset({1, 0}) == 3);
}

TEST_CASE("tensor constructors validate") {
    CHECK_THROWS_AS(Tensor({2, 0}), TensorError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), TensorError);  // 4 != 2
    CHECK_NOTHROW(Tensor({2, 2}, {1, 2, 3, 4}));
}

TEST_CASE("factories") {
    const Tensor f = Tensor::full({2, 2}, 3.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(f[i] == 3.0);

    const Tensor id = Tensor::identity(3);
    CHECK(id.at(0, 0) == 1.0);
    CHECK(id.at(1, 1) == 1.0);
    CHECK(id.at(0, 1) == 0.0);

    const Tensor s = Tensor::scalar(-2.0);
    CHECK(s.shape() == Shape{1});
    CHECK(s[0] == -2.0);
}

TEST_CASE("finiteness checks") {
    Tensor t({2});
    CHECK(t.all_finite());
    t[1] = std::nan("");
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(t.require_finite("unit"), TensorError);
    t[1] = HUGE_VAL;
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("shape helpers") {
    CHECK(shape_to_string({2, 3, 4}) == "[2, 3, 4]");
    CHECK(shape_size({2, 3, 4}) == 24);
    CHECK(shape_size({}) == 1);
}

TEST_CASE("out-of-range indexing throws") {
    Tensor t({2, 3});
    CHECK_THROWS_AS(t.offset({2, 0}), TensorError);
    CHECK_THROWS_AS(t.offset({0, 0, 0}), TensorError);
}
