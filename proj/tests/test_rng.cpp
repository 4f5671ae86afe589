#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "fedsim/rng.hpp"

using namespace fedsim;

TEST_CASE("same seed reproduces the same sequence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("derived streams differ across tags, ids and rounds") {
    std::set<std::uint64_t> firsts;
    for (std::uint64_t client = 0; client < 20; ++client)
        for (std::uint64_t round = 1; round <= 20; ++round)
            firsts.insert(derive_stream(7, stream::kClient, client, round).next_u64());
    CHECK(firsts.size() == 400);

    Rng init = derive_stream(7, stream::kInit);
    Rng part = derive_stream(7, stream::kPartition);
    CHECK(init.next_u64() != part.next_u64());
}

TEST_CASE("next_below stays in range and covers values") {
    Rng rng(1);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        std::uint64_t v = rng.next_below(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("uniform respects bounds") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        double v = rng.uniform(-0.25, 0.25);
        CHECK(v >= -0.25);
        CHECK(v < 0.25);
    }
}

TEST_CASE("normal has roughly standard moments") {
    Rng rng(11);
    const int n = 20000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < n; ++i) {
        double v = rng.normal();
        sum += v;
        sumsq += v * v;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("shuffle yields a permutation and differs between seeds") {
    std::vector<std::size_t> v(100);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    auto a = v, b = v;
    Rng ra(5), rb(6);
    shuffle(a, ra);
    shuffle(b, rb);
    auto sorted_a = a;
    std::sort(sorted_a.begin(), sorted_a.end());
    CHECK(sorted_a == v);
    CHECK(a != b);
}
