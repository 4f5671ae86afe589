#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "fedsim/partition.hpp"

using namespace fedsim;

namespace {

// Labels-only dataset; sample_fraction never touches inputs values.
Dataset<float> labeled_dataset(const std::vector<int>& labels, std::size_t classes) {
    Dataset<float> ds;
    ds.num_classes = classes;
    ds.labels = labels;
    ds.inputs = Tensor<float>::zeros({labels.size(), 1});
    return ds;
}

Dataset<float> balanced_dataset(std::size_t classes, std::size_t per_class) {
    std::vector<int> labels;
    labels.reserve(classes * per_class);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i) labels.push_back(static_cast<int>(c));
    return labeled_dataset(labels, classes);
}

void check_covers_exactly(const std::vector<ClientShard>& shards, std::size_t n) {
    std::vector<std::size_t> all;
    for (const auto& s : shards)
        all.insert(all.end(), s.indices.begin(), s.indices.end());
    CHECK(all.size() == n);
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
}

}  // namespace

TEST_CASE("partition_iid splits 50000 samples evenly") {
    SUBCASE("K=10 -> 5000 each") {
        auto shards = partition_iid(50000, 10, Rng(1));
        REQUIRE(shards.size() == 10);
        for (const auto& s : shards) CHECK(s.sample_count() == 5000);
        check_covers_exactly(shards, 50000);
    }
    SUBCASE("K=100 -> 500 each") {
        auto shards = partition_iid(50000, 100, Rng(1));
        REQUIRE(shards.size() == 100);
        for (const auto& s : shards) CHECK(s.sample_count() == 500);
        check_covers_exactly(shards, 50000);
    }
}

TEST_CASE("partition_iid remainder goes to the lowest client ids") {
    auto shards = partition_iid(7, 3, Rng(2));
    REQUIRE(shards.size() == 3);
    CHECK(shards[0].sample_count() == 3);
    CHECK(shards[1].sample_count() == 2);
    CHECK(shards[2].sample_count() == 2);
    check_covers_exactly(shards, 7);
    for (const auto& s : shards) CHECK_FALSE(s.knowledgeable);
}

TEST_CASE("partition_iid size law holds for random (N, K)") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t k = 1 + rng.next_below(40);
        std::size_t n = k + rng.next_below(3000);
        auto shards = partition_iid(n, k, Rng(rng.next_u64()));
        std::size_t lo = n, hi = 0;
        for (const auto& s : shards) {
            lo = std::min(lo, s.sample_count());
            hi = std::max(hi, s.sample_count());
            CHECK(s.sample_count() >= 1);
        }
        CHECK(hi - lo <= 1);
        check_covers_exactly(shards, n);
    }
}

TEST_CASE("different seeds give different permutations") {
    auto a = partition_iid(100, 4, Rng(10));
    auto b = partition_iid(100, 4, Rng(11));
    bool any_diff = false;
    for (std::size_t k = 0; k < 4; ++k) any_diff = any_diff || (a[k].indices != b[k].indices);
    CHECK(any_diff);

    auto c = partition_iid(100, 4, Rng(10));
    for (std::size_t k = 0; k < 4; ++k) CHECK(a[k].indices == c[k].indices);
}

TEST_CASE("partition_iid rejects K > N and K = 0") {
    CHECK_THROWS_AS(partition_iid(3, 4, Rng(0)), ConfigError);
    CHECK_THROWS_AS(partition_iid(3, 0, Rng(0)), ConfigError);
    auto shards = partition_iid(4, 4, Rng(0));
    for (const auto& s : shards) CHECK(s.sample_count() == 1);
}

TEST_CASE("sample_fraction with lambda=1 returns every index") {
    auto ds = balanced_dataset(10, 50);
    auto idx = sample_fraction(ds, 1.0, Rng(1));
    REQUIRE(idx.size() == 500);
    for (std::size_t i = 0; i < idx.size(); ++i) CHECK(idx[i] == i);
}

TEST_CASE("sample_fraction stratifies a balanced 10-class set") {
    auto ds = balanced_dataset(10, 5000);  // N = 50000

    SUBCASE("lambda = 0.5 -> 2500 per class, 25000 total") {
        auto idx = sample_fraction(ds, 0.5, Rng(2));
        CHECK(idx.size() == 25000);
        std::vector<int> per_class(10, 0);
        for (auto i : idx) ++per_class[ds.labels[i]];
        for (int c : per_class) CHECK(c == 2500);
    }
    SUBCASE("lambda = 0.1 -> 5000 total") {
        auto idx = sample_fraction(ds, 0.1, Rng(2));
        CHECK(idx.size() == 5000);
    }
    SUBCASE("indices are unique") {
        auto idx = sample_fraction(ds, 0.25, Rng(3));
        std::set<std::size_t> uniq(idx.begin(), idx.end());
        CHECK(uniq.size() == idx.size());
    }
}

TEST_CASE("per-class counts stay within 1 of lambda*N_c on awkward sizes") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t classes = 2 + rng.next_below(9);
        std::size_t per_class = 3 + rng.next_below(40);
        auto ds = balanced_dataset(classes, per_class);
        for (double lambda : {0.1, 0.25, 0.5}) {
            auto idx = sample_fraction(ds, lambda, Rng(rng.next_u64()));
            CHECK(idx.size() ==
                  static_cast<std::size_t>(std::floor(lambda * ds.size() + 1e-9)));
            std::vector<int> per(classes, 0);
            for (auto i : idx) ++per[ds.labels[i]];
            for (std::size_t c = 0; c < classes; ++c) {
                double expect = lambda * static_cast<double>(per_class);
                CHECK(std::abs(per[c] - expect) <= 1.0 + 1e-9);
            }
        }
    }
}

TEST_CASE("unbalanced datasets keep stratified proportions") {
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(0);
    for (int i = 0; i < 8; ++i) labels.push_back(1);
    for (int i = 0; i < 12; ++i) labels.push_back(2);
    auto ds = labeled_dataset(labels, 3);
    auto idx = sample_fraction(ds, 0.5, Rng(5));
    CHECK(idx.size() == 30);
    std::vector<int> per(3, 0);
    for (auto i : idx) ++per[ds.labels[i]];
    CHECK(per[0] == 20);
    CHECK(per[1] == 4);
    CHECK(per[2] == 6);
}

TEST_CASE("sample_fraction validates lambda") {
    auto ds = balanced_dataset(2, 5);
    CHECK_THROWS_AS(sample_fraction(ds, 0.0, Rng(0)), ConfigError);
    CHECK_THROWS_AS(sample_fraction(ds, -0.2, Rng(0)), ConfigError);
    CHECK_THROWS_AS(sample_fraction(ds, 1.5, Rng(0)), ConfigError);
}
