#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/optimizer.hpp"
#include "fedsim/partition.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Full experimental configuration. K regular clients always participate
// (sample ratio is fixed at 1); m knowledgeable clients each hold a lambda
// fraction of the training set. Either lambda is given directly or a total
// pool fraction is given and lambda = pool/m.
struct HyperParams {
    std::size_t rounds = 50;        // T
    std::size_t clients = 10;       // K
    std::size_t local_epochs = 5;   // E
    std::size_t batch_size = 64;    // B
    double learning_rate = 0.01;    // eta
    double momentum = 0.9;
    std::size_t knowledgeable = 0;  // m
    double lambda = 1.0;
    std::optional<double> pool;
    double sample_ratio = 1.0;
    std::uint64_t seed = 0;

    bool operator==(const HyperParams&) const = default;

    double resolved_lambda() const {
        if (pool && knowledgeable > 0)
            return *pool / static_cast<double>(knowledgeable);
        return lambda;
    }

    double pool_fraction() const {
        if (pool) return *pool;
        return resolved_lambda() * static_cast<double>(knowledgeable);
    }

    void validate() const {
        if (rounds < 1) throw ConfigError("T (rounds) must be >= 1");
        if (clients < 1) throw ConfigError("K (clients) must be >= 1");
        if (local_epochs < 1) throw ConfigError("E (local_epochs) must be >= 1");
        if (batch_size < 1) throw ConfigError("B (batch_size) must be >= 1");
        if (!(learning_rate > 0)) throw ConfigError("eta (learning_rate) must be > 0");
        if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0,1)");
        if (sample_ratio != 1.0) throw ConfigError("sample_ratio is fixed at 1");
        if (pool && (!(*pool > 0) || *pool > 1))
            throw ConfigError("pool must be in (0,1]");
        if (knowledgeable > 0) {
            double lam = resolved_lambda();
            if (!(lam > 0) || lam > 1) throw ConfigError("lambda must be in (0,1]");
            if (static_cast<double>(knowledgeable) * lam > 1.0 + 1e-12)
                throw ConfigError("m*lambda must not exceed 1 (knowledgeable clients "
                                  "cannot jointly exceed the training set)");
        }
    }
};

struct Cohort {
    std::vector<ClientShard> shards;   // regular (ids 0..K-1) then knowledgeable
    std::size_t total_samples = 0;     // m_t
};

// K regular IID shards over the whole training set, then m knowledgeable
// shards carved from a stratified pool of pool_fraction*N samples. The pool
// is shuffled and chunked so each knowledgeable shard stays class-rich.
// Knowledgeable data may overlap regular shards; regular clients keep the
// same shards they would have without any insertion.
template <typename S>
Cohort build_kci_cohort(const Dataset<S>& train, const HyperParams& hp) {
    hp.validate();
    if (train.size() == 0) throw ConfigError("build_kci_cohort: empty training set");

    Cohort cohort;
    cohort.shards =
        partition_iid(train.size(), hp.clients, derive_stream(hp.seed, stream::kPartition));

    if (hp.knowledgeable > 0) {
        std::vector<std::size_t> pool_idx =
            sample_fraction(train, hp.pool_fraction(), derive_stream(hp.seed, stream::kPool));
        Rng split_rng = derive_stream(hp.seed, stream::kPoolSplit);
        shuffle(pool_idx, split_rng);
        const std::size_t m = hp.knowledgeable;
        if (pool_idx.size() < m)
            throw ConfigError("knowledgeable pool of " + std::to_string(pool_idx.size()) +
                              " samples cannot cover m=" + std::to_string(m) + " clients");
        const std::size_t base = pool_idx.size() / m, rem = pool_idx.size() % m;
        std::size_t pos = 0;
        for (std::size_t j = 0; j < m; ++j) {
            std::size_t take = base + (j < rem ? 1 : 0);
            ClientShard shard;
            shard.client_id = static_cast<int>(hp.clients + j);
            shard.knowledgeable = true;
            shard.indices.assign(pool_idx.begin() + pos, pool_idx.begin() + pos + take);
            std::sort(shard.indices.begin(), shard.indices.end());
            pos += take;
            cohort.shards.push_back(std::move(shard));
        }
    }
    for (const auto& s : cohort.shards) cohort.total_samples += s.sample_count();
    return cohort;
}

// Sizes of the per-epoch batches: full B-sized batches plus the kept short
// remainder, e.g. 130 samples at B=64 -> {64, 64, 2}.
inline std::vector<std::size_t> batch_sizes(std::size_t n_samples, std::size_t batch) {
    std::vector<std::size_t> sizes;
    for (std::size_t pos = 0; pos < n_samples; pos += batch)
        sizes.push_back(std::min(batch, n_samples - pos));
    return sizes;
}

template <typename S>
struct LocalResult {
    ModelParams<S> params;
    double mean_final_epoch_loss = 0.0;
};

// One ClientTraining call: E epochs of sequential mini-batch SGD-with-
// momentum over the shard, starting from the received global snapshot.
// Batches are a fresh seeded shuffle per epoch; optimizer velocity starts at
// zero (no state crosses rounds).
template <typename S>
LocalResult<S> client_training(const ClientShard& shard, const ModelParams<S>& global,
                               const ModelSpec& spec, const HyperParams& hp,
                               const Dataset<S>& train, Rng rng) {
    LocalResult<S> result;
    result.params = global;
    if (hp.local_epochs == 0) return result;

    OptimizerState<S> state =
        make_optimizer_state(result.params, hp.learning_rate, hp.momentum);
    std::vector<std::size_t> order = shard.indices;
    double loss_sum = 0.0;
    std::size_t loss_samples = 0;
    for (std::size_t epoch = 1; epoch <= hp.local_epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t pos = 0; pos < order.size(); pos += hp.batch_size) {
            std::size_t len = std::min(hp.batch_size, order.size() - pos);
            Batch<S> batch = gather_batch(
                train, std::span<const std::size_t>(order.data() + pos, len));
            LossGrad<S> lg = loss_and_grad(result.params, spec, batch);
            sgd_step(result.params, lg.grads, state);
            if (epoch == hp.local_epochs) {
                loss_sum += lg.loss * static_cast<double>(len);
                loss_samples += len;
            }
        }
    }
    if (loss_samples > 0) result.mean_final_epoch_loss = loss_sum / static_cast<double>(loss_samples);
    return result;
}

template <typename S>
struct ClientUpdate {
    int client_id = 0;
    std::size_t sample_count = 0;  // n_k
    ModelParams<S> params;
};

// FedAvg aggregation: element-wise average weighted by n_k/m_t, summed in
// ascending client_id order and accumulated in double so the result does not
// depend on how the updates were produced or scheduled.
template <typename S>
ModelParams<S> aggregate(const std::vector<ClientUpdate<S>>& updates) {
    if (updates.empty()) throw DataError("aggregate: empty model list");
    std::vector<std::size_t> order(updates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return updates[a].client_id < updates[b].client_id;
    });

    std::size_t m_t = 0;
    for (const auto& u : updates) {
        if (u.sample_count == 0) throw DataError("aggregate: client with zero samples");
        if (!u.params.same_structure(updates[0].params))
            throw InternalError("aggregate: structural mismatch between client models");
        m_t += u.sample_count;
    }

    std::vector<double> acc(updates[0].params.scalar_count(), 0.0);
    for (std::size_t i : order) {
        const double w = static_cast<double>(updates[i].sample_count) /
                         static_cast<double>(m_t);
        std::size_t pos = 0;
        updates[i].params.for_each_scalar(
            [&](const S& v) { acc[pos++] += w * static_cast<double>(v); });
    }
    ModelParams<S> out = zeros_like(updates[0].params);
    std::size_t pos = 0;
    out.for_each_scalar([&](S& v) { v = static_cast<S>(acc[pos++]); });
    return out;
}

struct RoundMetrics {
    std::size_t round = 0;          // 1-based
    double test_accuracy = 0.0;
    double train_loss = 0.0;        // n_k-weighted mean of final local epochs
    double wall_seconds = 0.0;
};

template <typename S>
struct FederatedResult {
    std::vector<RoundMetrics> metrics;
    ModelParams<S> final_params;
};

namespace detail {

// Deterministic parallel map over clients: work order is arbitrary, but each
// result lands in its own slot and aggregation order is fixed by client_id,
// so thread count cannot change any output bit.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    unsigned count = std::min<unsigned>(threads, static_cast<unsigned>(n));
    pool.reserve(count);
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

// The server loop: initialize w_0 from the seed, then per round let every
// cohort member train from the current global snapshot, aggregate by sample
// count, and evaluate. Exactly T metric rows; bit-identical for a given seed
// regardless of `threads`.
template <typename S>
FederatedResult<S> run_federated(const ModelSpec& spec, const Dataset<S>& train,
                                 const Dataset<S>& test, const HyperParams& hp,
                                 unsigned threads = 1) {
    hp.validate();
    train.validate();
    test.validate();
    if (train.sample_shape() != spec.input_shape)
        throw ConfigError("model input shape does not match dataset sample shape");
    if (spec.num_classes() != train.num_classes)
        throw ConfigError("model output size does not match dataset class count");
    if (train.num_classes != test.num_classes ||
        train.sample_shape() != test.sample_shape())
        throw ConfigError("train and test sets disagree on shape or classes");

    Cohort cohort = build_kci_cohort(train, hp);
    FederatedResult<S> result;
    result.final_params = init_params<S>(spec, derive_stream(hp.seed, stream::kInit));
    result.metrics.reserve(hp.rounds);

    std::vector<LocalResult<S>> locals(cohort.shards.size());
    for (std::size_t t = 1; t <= hp.rounds; ++t) {
        auto tic = std::chrono::steady_clock::now();
        const ModelParams<S>& snapshot = result.final_params;
        detail::parallel_for(cohort.shards.size(), threads, [&](std::size_t i) {
            const ClientShard& shard = cohort.shards[i];
            Rng rng = derive_stream(hp.seed, stream::kClient,
                                    static_cast<std::uint64_t>(shard.client_id), t);
            locals[i] = client_training(shard, snapshot, spec, hp, train, rng);
        });

        std::vector<ClientUpdate<S>> updates;
        updates.reserve(cohort.shards.size());
        double loss_acc = 0.0;
        for (std::size_t i = 0; i < cohort.shards.size(); ++i) {
            updates.push_back({cohort.shards[i].client_id, cohort.shards[i].sample_count(),
                               std::move(locals[i].params)});
            loss_acc += locals[i].mean_final_epoch_loss *
                        static_cast<double>(cohort.shards[i].sample_count());
        }
        result.final_params = aggregate(updates);

        RoundMetrics row;
        row.round = t;
        row.test_accuracy = evaluate_accuracy(result.final_params, spec, test);
        row.train_loss = loss_acc / static_cast<double>(cohort.total_samples);
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
        result.metrics.push_back(row);
    }
    return result;
}

}  // namespace fedsim
