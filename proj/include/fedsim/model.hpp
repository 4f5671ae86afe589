#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

// Layer descriptors. Convolutions are valid (no padding), stride 1; pooling
// stride equals the window and floors away any remainder.
struct Conv2D {
    std::size_t kernel_h, kernel_w, in_channels, out_channels;
};
struct MaxPool2D {
    std::size_t window_h, window_w;
};
struct ReLU {};
struct Flatten {};
struct Dense {
    std::size_t in_features, out_features;
};

using LayerDesc = std::variant<Conv2D, MaxPool2D, ReLU, Flatten, Dense>;

inline std::string layer_name(const LayerDesc& d) {
    struct V {
        std::string operator()(const Conv2D&) const { return "Conv2D"; }
        std::string operator()(const MaxPool2D&) const { return "MaxPool2D"; }
        std::string operator()(const ReLU&) const { return "ReLU"; }
        std::string operator()(const Flatten&) const { return "Flatten"; }
        std::string operator()(const Dense&) const { return "Dense"; }
    };
    return std::visit(V{}, d);
}

namespace detail {
inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}
}  // namespace detail

// Ordered layer list plus the declared per-sample input shape. Shape
// consistency is established once by trace(); everything downstream relies
// on it.
struct ModelSpec {
    std::vector<std::size_t> input_shape;  // per-sample, e.g. {3,32,32} or {d}
    std::vector<LayerDesc> layers;

    // Per-layer-boundary shapes: trace()[0] is the input shape, trace()[i+1]
    // the output of layer i. Throws ConfigError on any incompatibility.
    std::vector<std::vector<std::size_t>> trace() const {
        std::vector<std::vector<std::size_t>> shapes;
        shapes.push_back(input_shape);
        if (input_shape.empty() || Tensor<float>::numel(input_shape) == 0)
            throw ConfigError("model input shape must be non-empty with positive dims");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::vector<std::size_t>& in = shapes.back();
            auto bad = [&](const std::string& why) {
                return ConfigError("layer " + std::to_string(i) + " (" +
                                   layer_name(layers[i]) + "): " + why + ", input shape " +
                                   detail::shape_str(in));
            };
            std::vector<std::size_t> out;
            if (const auto* c = std::get_if<Conv2D>(&layers[i])) {
                if (c->kernel_h == 0 || c->kernel_w == 0 || c->in_channels == 0 ||
                    c->out_channels == 0)
                    throw bad("all Conv2D dimensions must be positive");
                if (in.size() != 3) throw bad("expects rank-3 [channels,h,w] input");
                if (in[0] != c->in_channels)
                    throw bad("in_channels " + std::to_string(c->in_channels) +
                              " does not match input channels " + std::to_string(in[0]));
                if (in[1] < c->kernel_h || in[2] < c->kernel_w)
                    throw bad("kernel larger than input");
                out = {c->out_channels, in[1] - c->kernel_h + 1, in[2] - c->kernel_w + 1};
            } else if (const auto* p = std::get_if<MaxPool2D>(&layers[i])) {
                if (p->window_h == 0 || p->window_w == 0)
                    throw bad("pool window must be positive");
                if (in.size() != 3) throw bad("expects rank-3 [channels,h,w] input");
                if (in[1] < p->window_h || in[2] < p->window_w)
                    throw bad("pool window larger than input");
                out = {in[0], in[1] / p->window_h, in[2] / p->window_w};
            } else if (std::holds_alternative<ReLU>(layers[i])) {
                out = in;
            } else if (std::holds_alternative<Flatten>(layers[i])) {
                out = {Tensor<float>::numel(in)};
            } else {
                const auto& l = std::get<Dense>(layers[i]);
                if (l.in_features == 0 || l.out_features == 0)
                    throw bad("Dense features must be positive");
                if (in.size() != 1) throw bad("expects rank-1 input; add Flatten first");
                if (in[0] != l.in_features)
                    throw bad("in_features " + std::to_string(l.in_features) +
                              " does not match input size " + std::to_string(in[0]));
                out = {l.out_features};
            }
            shapes.push_back(std::move(out));
        }
        if (shapes.back().size() != 1)
            throw ConfigError("model output must be a rank-1 logits vector");
        return shapes;
    }

    std::size_t num_classes() const { return trace().back()[0]; }
};

// The CNN used for the full-scale CIFAR-10 runs: two 5x5 convolutions (6 and
// 16 channels), each ReLU + 2x2 max-pooled, then 120- and 84-unit ReLU dense
// layers and a 10-way classifier head. Dense input is 16*5*5 = 400.
inline ModelSpec paper_cnn() {
    ModelSpec spec;
    spec.input_shape = {3, 32, 32};
    spec.layers = {
        Conv2D{5, 5, 3, 6},   ReLU{}, MaxPool2D{2, 2},
        Conv2D{5, 5, 6, 16},  ReLU{}, MaxPool2D{2, 2},
        Flatten{},
        Dense{400, 120},      ReLU{},
        Dense{120, 84},       ReLU{},
        Dense{84, 10},
    };
    return spec;
}

inline ModelSpec mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t classes) {
    ModelSpec spec;
    spec.input_shape = {input_dim};
    std::size_t prev = input_dim;
    for (std::size_t h : hidden) {
        spec.layers.push_back(Dense{prev, h});
        spec.layers.push_back(ReLU{});
        prev = h;
    }
    spec.layers.push_back(Dense{prev, classes});
    return spec;
}

// One parameterized layer's tensors. Only Conv2D and Dense carry parameters;
// both have a weight and a bias.
template <typename S>
struct ParamTensor {
    std::size_t layer_index = 0;
    Tensor<S> weight;
    Tensor<S> bias;
};

template <typename S>
struct ModelParams {
    std::vector<ParamTensor<S>> entries;

    bool same_structure(const ModelParams& other) const {
        if (entries.size() != other.entries.size()) return false;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].layer_index != other.entries[i].layer_index) return false;
            if (!entries[i].weight.same_shape(other.entries[i].weight)) return false;
            if (!entries[i].bias.same_shape(other.entries[i].bias)) return false;
        }
        return true;
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.weight.size() + e.bias.size();
        return n;
    }

    // Flat view over every scalar (weights then bias, per entry). Handy for
    // element-wise math and the finite-difference oracle.
    template <typename F>
    void for_each_scalar(F&& f) {
        for (auto& e : entries) {
            for (auto& v : e.weight.values) f(v);
            for (auto& v : e.bias.values) f(v);
        }
    }
    template <typename F>
    void for_each_scalar(F&& f) const {
        for (const auto& e : entries) {
            for (const auto& v : e.weight.values) f(v);
            for (const auto& v : e.bias.values) f(v);
        }
    }
};

template <typename S>
ModelParams<S> zeros_like(const ModelParams<S>& p) {
    ModelParams<S> out;
    out.entries.reserve(p.entries.size());
    for (const auto& e : p.entries)
        out.entries.push_back({e.layer_index, Tensor<S>::zeros(e.weight.shape),
                               Tensor<S>::zeros(e.bias.shape)});
    return out;
}

// Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights and biases, drawn in a
// fixed layer-then-weight-then-bias order so a seed fully determines the
// result.
template <typename S>
ModelParams<S> init_params(const ModelSpec& spec, Rng rng) {
    spec.trace();  // reject inconsistent specs before drawing anything
    ModelParams<S> params;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDesc& d = spec.layers[i];
        std::vector<std::size_t> w_shape, b_shape;
        std::size_t fan_in = 0;
        if (const auto* c = std::get_if<Conv2D>(&d)) {
            w_shape = {c->out_channels, c->in_channels, c->kernel_h, c->kernel_w};
            b_shape = {c->out_channels};
            fan_in = c->in_channels * c->kernel_h * c->kernel_w;
        } else if (const auto* l = std::get_if<Dense>(&d)) {
            w_shape = {l->out_features, l->in_features};
            b_shape = {l->out_features};
            fan_in = l->in_features;
        } else {
            continue;
        }
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        ParamTensor<S> entry;
        entry.layer_index = i;
        entry.weight = Tensor<S>::zeros(w_shape);
        entry.bias = Tensor<S>::zeros(b_shape);
        for (auto& v : entry.weight.values) v = static_cast<S>(rng.uniform(-bound, bound));
        for (auto& v : entry.bias.values) v = static_cast<S>(rng.uniform(-bound, bound));
        params.entries.push_back(std::move(entry));
    }
    return params;
}

}  // namespace fedsim
