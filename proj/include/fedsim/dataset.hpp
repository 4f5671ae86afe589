#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

// A mini-batch: inputs [b, ...sample dims], one integer label per row.
template <typename S>
struct Batch {
    Tensor<S> inputs;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

template <typename S>
struct Dataset {
    Tensor<S> inputs;          // [N, ...sample dims]
    std::vector<int> labels;   // in [0, num_classes)
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }

    std::vector<std::size_t> sample_shape() const {
        return {inputs.shape.begin() + 1, inputs.shape.end()};
    }

    std::size_t sample_numel() const { return Tensor<S>::numel(sample_shape()); }

    void validate() const {
        if (labels.empty() || inputs.shape.empty() || inputs.shape[0] != labels.size())
            throw DataError("dataset inputs and labels must have equal, non-zero counts");
        if (num_classes < 2) throw DataError("dataset needs at least 2 classes");
        for (int y : labels)
            if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
                throw DataError("dataset label out of range");
    }
};

template <typename S>
Batch<S> gather_batch(const Dataset<S>& ds, std::span<const std::size_t> indices) {
    std::size_t row = ds.sample_numel();
    Batch<S> batch;
    batch.inputs.shape = ds.inputs.shape;
    batch.inputs.shape[0] = indices.size();
    batch.inputs.values.resize(indices.size() * row);
    batch.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::size_t src = indices[i];
        if (src >= ds.size()) throw InternalError("batch index out of range");
        const S* from = ds.inputs.values.data() + src * row;
        std::copy(from, from + row, batch.inputs.values.data() + i * row);
        batch.labels[i] = ds.labels[src];
    }
    return batch;
}

// Gaussian blobs with deterministic class means at pairwise distance >=
// `separation` and unit per-dimension variance. Means depend only on
// (classes, dim, separation), so train and test sets drawn with different
// seeds share the same distribution. Samples are laid out class-major.
template <typename S>
Dataset<S> make_synthetic(std::size_t classes, std::size_t per_class, std::size_t dim,
                          double separation, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("synthetic dataset needs classes >= 2");
    if (per_class < 1) throw ConfigError("synthetic dataset needs per_class >= 1");
    if (dim < 1) throw ConfigError("synthetic dataset needs dim >= 1");
    if (!(separation > 0)) throw ConfigError("synthetic dataset needs separation > 0");

    // dim >= classes: one axis per class, pairwise distance exactly
    // `separation`. Otherwise: a lattice along axis 0 with spacing
    // `separation`.
    std::vector<std::vector<double>> means(classes, std::vector<double>(dim, 0.0));
    if (dim >= classes) {
        double s = separation / std::sqrt(2.0);
        for (std::size_t c = 0; c < classes; ++c) means[c][c] = s;
    } else {
        for (std::size_t c = 0; c < classes; ++c) means[c][0] = separation * static_cast<double>(c);
    }

    Dataset<S> ds;
    ds.num_classes = classes;
    std::size_t n = classes * per_class;
    ds.inputs.shape = {n, dim};
    ds.inputs.values.resize(n * dim);
    ds.labels.resize(n);
    Rng rng(seed);
    std::size_t pos = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i, ++pos) {
            ds.labels[pos] = static_cast<int>(c);
            S* out = ds.inputs.values.data() + pos * dim;
            for (std::size_t j = 0; j < dim; ++j)
                out[j] = static_cast<S>(means[c][j] + rng.normal());
        }
    }
    return ds;
}

enum class Split { train, test };

namespace detail {

// One canonical CIFAR-10 batch file: 10000 records of (label byte, 3072
// pixel bytes), 30,730,000 bytes total.
inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarRecordsPerFile = 10000;
inline constexpr std::size_t kCifarFileBytes = kCifarRecordBytes * kCifarRecordsPerFile;
inline constexpr std::size_t kCifarPixels = 3072;

inline void read_cifar_file(const std::filesystem::path& path, Dataset<float>& ds,
                            std::size_t& pos) {
    std::error_code ec;
    auto file_size = std::filesystem::file_size(path, ec);
    if (ec) throw DataError("cannot open CIFAR-10 file " + path.string());
    if (file_size != kCifarFileBytes)
        throw DataError("CIFAR-10 file " + path.string() + " has " +
                        std::to_string(file_size) + " bytes, expected " +
                        std::to_string(kCifarFileBytes));
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open CIFAR-10 file " + path.string());
    std::vector<unsigned char> record(kCifarRecordBytes);
    for (std::size_t r = 0; r < kCifarRecordsPerFile; ++r, ++pos) {
        if (!in.read(reinterpret_cast<char*>(record.data()), kCifarRecordBytes))
            throw DataError("short read from CIFAR-10 file " + path.string());
        if (record[0] > 9)
            throw DataError("CIFAR-10 file " + path.string() + " record " +
                            std::to_string(r) + " has label " + std::to_string(record[0]));
        ds.labels[pos] = record[0];
        float* out = ds.inputs.values.data() + pos * kCifarPixels;
        for (std::size_t i = 0; i < kCifarPixels; ++i)
            out[i] = (static_cast<float>(record[1 + i]) / 255.0f - 0.5f) / 0.5f;
    }
}

}  // namespace detail

// Canonical CIFAR-10 binary layout: five train files and one test file,
// channel-major 32x32 RGB. Pixels map to [-1, 1] via (x/255 - 0.5)/0.5.
inline Dataset<float> load_cifar10(const std::string& directory, Split split) {
    std::vector<std::filesystem::path> files;
    std::filesystem::path dir(directory);
    if (split == Split::train) {
        for (int i = 1; i <= 5; ++i)
            files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
        files.push_back(dir / "test_batch.bin");
    }
    Dataset<float> ds;
    ds.num_classes = 10;
    std::size_t n = files.size() * detail::kCifarRecordsPerFile;
    ds.inputs.shape = {n, 3, 32, 32};
    ds.inputs.values.resize(n * detail::kCifarPixels);
    ds.labels.resize(n);
    std::size_t pos = 0;
    for (const auto& f : files) detail::read_cifar_file(f, ds, pos);
    return ds;
}

}  // namespace fedsim
