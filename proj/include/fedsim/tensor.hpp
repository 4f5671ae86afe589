#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

// Row-major n-dimensional array; the carrier for parameters, activations and
// gradients. Values are whatever scalar the caller trains in (float for the
// main path, double for the gradient checks).
template <typename S>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<S> values;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shp, std::vector<S> vals)
        : shape(std::move(shp)), values(std::move(vals)) {
        if (values.size() != numel(shape))
            throw InternalError("tensor value count does not match shape");
    }

    static std::size_t numel(const std::vector<std::size_t>& shp) {
        std::size_t n = 1;
        for (std::size_t d : shp) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> shp) {
        std::size_t n = numel(shp);
        return Tensor(std::move(shp), std::vector<S>(n, S(0)));
    }

    std::size_t size() const { return values.size(); }
    S& operator[](std::size_t i) { return values[i]; }
    const S& operator[](std::size_t i) const { return values[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

template <typename S>
bool all_finite(const Tensor<S>& t) {
    for (S v : t.values)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

}  // namespace fedsim
