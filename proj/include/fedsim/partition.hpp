#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct ClientShard {
    int client_id = 0;
    std::vector<std::size_t> indices;
    bool knowledgeable = false;

    std::size_t sample_count() const { return indices.size(); }
};

// Uniform IID split: a seeded permutation of [0, N) chunked into K contiguous
// runs. The first (N mod K) clients receive one extra sample, so shard sizes
// never differ by more than one.
inline std::vector<ClientShard> partition_iid(std::size_t n_samples, std::size_t k_clients,
                                              Rng rng) {
    if (k_clients < 1) throw ConfigError("partition_iid: need at least one client");
    if (k_clients > n_samples)
        throw ConfigError("partition_iid: more clients (" + std::to_string(k_clients) +
                          ") than samples (" + std::to_string(n_samples) + ")");
    std::vector<std::size_t> perm = random_permutation(n_samples, rng);
    std::vector<ClientShard> shards(k_clients);
    const std::size_t base = n_samples / k_clients, rem = n_samples % k_clients;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < k_clients; ++k) {
        std::size_t take = base + (k < rem ? 1 : 0);
        shards[k].client_id = static_cast<int>(k);
        shards[k].indices.assign(perm.begin() + pos, perm.begin() + pos + take);
        pos += take;
    }
    return shards;
}

namespace detail {
// floor(frac * n) with a guard against doubles like 0.1*50000 landing just
// below the integer they represent.
inline std::size_t floor_count(double frac, std::size_t n) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
}
}  // namespace detail

// Class-stratified sample of floor(lambda*N) indices: every class contributes
// floor(lambda*N_c) of its indices by seeded sampling without replacement;
// the remainder up to the target is drawn uniformly from the leftovers, at
// most one extra per class so per-class counts never stray more than one
// from lambda*N_c. lambda = 1 returns every index.
template <typename S>
std::vector<std::size_t> sample_fraction(const Dataset<S>& ds, double lambda, Rng rng) {
    if (!(lambda > 0.0) || lambda > 1.0)
        throw ConfigError("sample_fraction: lambda must be in (0,1], got " +
                          std::to_string(lambda));
    const std::size_t n = ds.size();
    const std::size_t target = detail::floor_count(lambda, n);

    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < n; ++i) {
        int y = ds.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= ds.num_classes)
            throw DataError("sample_fraction: label out of range");
        by_class[y].push_back(i);
    }

    std::vector<std::size_t> chosen;
    chosen.reserve(target);
    std::vector<std::pair<std::size_t, int>> leftovers;  // (index, class)
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& cls = by_class[c];
        std::size_t take = detail::floor_count(lambda, cls.size());
        shuffle(cls, rng);
        chosen.insert(chosen.end(), cls.begin(), cls.begin() + take);
        for (std::size_t i = take; i < cls.size(); ++i)
            leftovers.emplace_back(cls[i], static_cast<int>(c));
    }
    if (chosen.size() < target) {
        shuffle(leftovers, rng);
        std::vector<bool> granted(ds.num_classes, false);
        std::size_t need = target - chosen.size();
        for (const auto& [idx, cls] : leftovers) {
            if (need == 0) break;
            if (granted[cls]) continue;
            granted[cls] = true;
            chosen.push_back(idx);
            --need;
        }
        if (need > 0) throw InternalError("sample_fraction: remainder not coverable");
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

}  // namespace fedsim
