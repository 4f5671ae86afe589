#include <cmath>

#include "doctest.h"
#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"

using namespace fedsim;

TEST_CASE("Dense(4,2) init stays within the fan-in bound") {
    ModelSpec spec{{4}, {Dense{4, 2}}};
    auto params = init_params<float>(spec, Rng(123));
    REQUIRE(params.entries.size() == 1);
    CHECK(params.entries[0].weight.size() == 8);
    for (float v : params.entries[0].weight.values) CHECK(std::abs(v) <= 0.5f);
    for (float v : params.entries[0].bias.values) CHECK(std::abs(v) <= 0.5f);
}

TEST_CASE("init is deterministic given the seed") {
    ModelSpec spec{{4}, {Dense{4, 3}, ReLU{}, Dense{3, 2}}};
    auto a = init_params<float>(spec, Rng(9));
    auto b = init_params<float>(spec, Rng(9));
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t e = 0; e < a.entries.size(); ++e) {
        CHECK(a.entries[e].weight.values == b.entries[e].weight.values);
        CHECK(a.entries[e].bias.values == b.entries[e].bias.values);
    }
    auto c = init_params<float>(spec, Rng(10));
    CHECK(a.entries[0].weight.values != c.entries[0].weight.values);
}

TEST_CASE("paper CNN traces to a 400-feature dense input and 10 classes") {
    ModelSpec spec = paper_cnn();
    auto shapes = spec.trace();
    CHECK(shapes.front() == std::vector<std::size_t>{3, 32, 32});
    // conv 32->28, pool ->14, conv ->10, pool ->5
    CHECK(shapes[1] == std::vector<std::size_t>{6, 28, 28});
    CHECK(shapes[3] == std::vector<std::size_t>{6, 14, 14});
    CHECK(shapes[4] == std::vector<std::size_t>{16, 10, 10});
    CHECK(shapes[6] == std::vector<std::size_t>{16, 5, 5});
    CHECK(shapes[7] == std::vector<std::size_t>{400});
    CHECK(spec.num_classes() == 10);

    const auto* first_dense = std::get_if<Dense>(&spec.layers[7]);
    REQUIRE(first_dense != nullptr);
    CHECK(first_dense->in_features == 400);
}

TEST_CASE("inconsistent specs are rejected") {
    auto trace_of = [](ModelSpec spec) { return spec.trace(); };
    CHECK_THROWS_AS(trace_of({{4}, {Dense{5, 2}}}), ConfigError);
    CHECK_THROWS_AS(trace_of({{3, 8, 8}, {Conv2D{9, 9, 3, 4}}}), ConfigError);
    CHECK_THROWS_AS(trace_of({{3, 8, 8}, {Conv2D{3, 3, 2, 4}}}), ConfigError);
    CHECK_THROWS_AS(trace_of({{8}, {MaxPool2D{2, 2}}}), ConfigError);
    CHECK_THROWS_AS(trace_of({{3, 8, 8}, {Dense{192, 10}}}), ConfigError);
    // output must be rank-1 logits
    CHECK_THROWS_AS(trace_of({{3, 8, 8}, {Conv2D{3, 3, 3, 4}}}), ConfigError);
    CHECK_THROWS_AS(init_params<float>(ModelSpec{{4}, {Dense{5, 2}}}, Rng(0)), ConfigError);
}

TEST_CASE("mlp factory wires hidden layers") {
    ModelSpec spec = mlp(32, {64, 16}, 10);
    auto shapes = spec.trace();
    CHECK(shapes.back() == std::vector<std::size_t>{10});
    CHECK(spec.layers.size() == 5);  // dense relu dense relu dense
    CHECK(spec.num_classes() == 10);
}

TEST_CASE("params from the same spec are structurally combinable") {
    ModelSpec spec = mlp(8, {4}, 3);
    auto a = init_params<double>(spec, Rng(1));
    auto b = init_params<double>(spec, Rng(2));
    CHECK(a.same_structure(b));
    CHECK(a.scalar_count() == b.scalar_count());
    CHECK(a.scalar_count() == (8 * 4 + 4) + (4 * 3 + 3));
}
