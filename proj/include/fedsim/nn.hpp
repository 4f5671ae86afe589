#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

// Per-layer activation record kept by the forward pass so backward can run
// without recomputation. layer_inputs[i] is the tensor fed INTO layer i;
// pool_argmax[i] holds, for each max-pool output element, the flat index of
// the winning input element (first maximum wins on ties).
template <typename S>
struct ForwardCache {
    std::vector<Tensor<S>> layer_inputs;
    std::vector<std::vector<std::size_t>> pool_argmax;
};

namespace detail {

template <typename S>
const ParamTensor<S>* param_entry(const ModelParams<S>& params, std::size_t layer_index) {
    for (const auto& e : params.entries)
        if (e.layer_index == layer_index) return &e;
    return nullptr;
}

// Kernel taps outermost, full output rows innermost: the hot loop is a
// contiguous multiply-add over the output width.
template <typename S>
void conv2d_forward(const Conv2D& l, const Tensor<S>& in, const Tensor<S>& w,
                    const Tensor<S>& bias, Tensor<S>& out) {
    const std::size_t b = in.shape[0], ci = in.shape[1], h = in.shape[2], wd = in.shape[3];
    const std::size_t co = l.out_channels, kh = l.kernel_h, kw = l.kernel_w;
    const std::size_t oh = h - kh + 1, ow = wd - kw + 1;
    out = Tensor<S>::zeros({b, co, oh, ow});
    for (std::size_t s = 0; s < b; ++s) {
        const S* x = in.values.data() + s * ci * h * wd;
        S* y = out.values.data() + s * co * oh * ow;
        for (std::size_t o = 0; o < co; ++o) {
            S* ychan = y + o * oh * ow;
            const S bo = bias[o];
            for (std::size_t i = 0; i < oh * ow; ++i) ychan[i] = bo;
            for (std::size_t c = 0; c < ci; ++c) {
                for (std::size_t p = 0; p < kh; ++p) {
                    const S* wrow = w.values.data() + ((o * ci + c) * kh + p) * kw;
                    for (std::size_t q = 0; q < kw; ++q) {
                        const S wv = wrow[q];
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const S* xrow = x + (c * h + oy + p) * wd + q;
                            S* yrow = ychan + oy * ow;
                            for (std::size_t ox = 0; ox < ow; ++ox)
                                yrow[ox] += wv * xrow[ox];
                        }
                    }
                }
            }
        }
    }
}

template <typename S>
void conv2d_backward(const Conv2D& l, const Tensor<S>& in, const Tensor<S>& w,
                     const Tensor<S>& dout, Tensor<S>& dw, Tensor<S>& db, Tensor<S>& din) {
    const std::size_t b = in.shape[0], ci = in.shape[1], h = in.shape[2], wd = in.shape[3];
    const std::size_t co = l.out_channels, kh = l.kernel_h, kw = l.kernel_w;
    const std::size_t oh = h - kh + 1, ow = wd - kw + 1;
    din = Tensor<S>::zeros(in.shape);
    for (std::size_t s = 0; s < b; ++s) {
        const S* x = in.values.data() + s * ci * h * wd;
        S* dx = din.values.data() + s * ci * h * wd;
        const S* dy = dout.values.data() + s * co * oh * ow;
        for (std::size_t o = 0; o < co; ++o) {
            const S* dychan = dy + o * oh * ow;
            S dbo = 0;
            for (std::size_t i = 0; i < oh * ow; ++i) dbo += dychan[i];
            db[o] += dbo;
            for (std::size_t c = 0; c < ci; ++c) {
                for (std::size_t p = 0; p < kh; ++p) {
                    S* dwrow = dw.values.data() + ((o * ci + c) * kh + p) * kw;
                    const S* wrow = w.values.data() + ((o * ci + c) * kh + p) * kw;
                    for (std::size_t q = 0; q < kw; ++q) {
                        const S wv = wrow[q];
                        S dwacc = 0;
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const S* xrow = x + (c * h + oy + p) * wd + q;
                            S* dxrow = dx + (c * h + oy + p) * wd + q;
                            const S* dyrow = dychan + oy * ow;
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                dwacc += dyrow[ox] * xrow[ox];
                                dxrow[ox] += dyrow[ox] * wv;
                            }
                        }
                        dwrow[q] += dwacc;
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Runs the model's layers over a batch; logits come back as [b, num_classes].
// Pass a cache to retain what backward needs.
template <typename S>
Tensor<S> forward(const ModelParams<S>& params, const ModelSpec& spec,
                  const Batch<S>& batch, ForwardCache<S>* cache = nullptr) {
    if (batch.inputs.shape.empty() || batch.inputs.shape[0] == 0)
        throw DataError("forward: empty batch");
    std::vector<std::size_t> sample_dims(batch.inputs.shape.begin() + 1,
                                         batch.inputs.shape.end());
    if (sample_dims != spec.input_shape)
        throw DataError("forward: batch sample shape does not match model input shape");
    if (!batch.labels.empty() && batch.labels.size() != batch.inputs.shape[0])
        throw DataError("forward: label count does not match batch size");

    const std::size_t b = batch.inputs.shape[0];
    Tensor<S> cur = batch.inputs;
    if (cache) {
        cache->layer_inputs.assign(spec.layers.size(), Tensor<S>{});
        cache->pool_argmax.assign(spec.layers.size(), {});
    }
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (cache) cache->layer_inputs[i] = cur;
        const LayerDesc& d = spec.layers[i];
        if (const auto* conv = std::get_if<Conv2D>(&d)) {
            if (cur.shape.size() != 4 || cur.shape[1] != conv->in_channels ||
                cur.shape[2] < conv->kernel_h || cur.shape[3] < conv->kernel_w)
                throw DataError("forward: Conv2D input shape mismatch at layer " +
                                std::to_string(i));
            const auto* e = detail::param_entry(params, i);
            if (!e || e->weight.shape !=
                          std::vector<std::size_t>{conv->out_channels, conv->in_channels,
                                                   conv->kernel_h, conv->kernel_w})
                throw InternalError("forward: params do not match Conv2D layer " +
                                    std::to_string(i));
            Tensor<S> out;
            detail::conv2d_forward(*conv, cur, e->weight, e->bias, out);
            cur = std::move(out);
        } else if (const auto* pool = std::get_if<MaxPool2D>(&d)) {
            if (cur.shape.size() != 4 || cur.shape[2] < pool->window_h ||
                cur.shape[3] < pool->window_w)
                throw DataError("forward: MaxPool2D input shape mismatch at layer " +
                                std::to_string(i));
            const std::size_t c = cur.shape[1], h = cur.shape[2], w = cur.shape[3];
            const std::size_t oh = h / pool->window_h, ow = w / pool->window_w;
            Tensor<S> out = Tensor<S>::zeros({b, c, oh, ow});
            std::vector<std::size_t> argmax(out.size());
            std::size_t k = 0;
            for (std::size_t s = 0; s < b; ++s) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        for (std::size_t ox = 0; ox < ow; ++ox, ++k) {
                            S best = -std::numeric_limits<S>::infinity();
                            std::size_t best_idx = 0;
                            for (std::size_t p = 0; p < pool->window_h; ++p) {
                                for (std::size_t q = 0; q < pool->window_w; ++q) {
                                    std::size_t idx =
                                        ((s * c + ch) * h + oy * pool->window_h + p) * w +
                                        ox * pool->window_w + q;
                                    if (cur[idx] > best) {
                                        best = cur[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                            out[k] = best;
                            argmax[k] = best_idx;
                        }
                    }
                }
            }
            if (cache) cache->pool_argmax[i] = std::move(argmax);
            cur = std::move(out);
        } else if (std::holds_alternative<ReLU>(d)) {
            for (auto& v : cur.values) v = v > S(0) ? v : S(0);
        } else if (std::holds_alternative<Flatten>(d)) {
            cur.shape = {b, cur.size() / b};
        } else if (const auto* dense = std::get_if<Dense>(&d)) {
            if (cur.shape.size() != 2 || cur.shape[1] != dense->in_features)
                throw DataError("forward: Dense input shape mismatch at layer " +
                                std::to_string(i));
            const auto* e = detail::param_entry(params, i);
            if (!e || e->weight.shape !=
                          std::vector<std::size_t>{dense->out_features, dense->in_features})
                throw InternalError("forward: params do not match Dense layer " +
                                    std::to_string(i));
            const std::size_t in_f = dense->in_features, out_f = dense->out_features;
            Tensor<S> out = Tensor<S>::zeros({b, out_f});
            for (std::size_t s = 0; s < b; ++s) {
                const S* x = cur.values.data() + s * in_f;
                S* y = out.values.data() + s * out_f;
                for (std::size_t o = 0; o < out_f; ++o) {
                    const S* wrow = e->weight.values.data() + o * in_f;
                    S acc = e->bias[o];
                    for (std::size_t j = 0; j < in_f; ++j) acc += wrow[j] * x[j];
                    y[o] = acc;
                }
            }
            cur = std::move(out);
        }
    }
    return cur;
}

template <typename S>
struct LossGrad {
    double loss = 0.0;
    ModelParams<S> grads;
};

// Mean softmax cross-entropy over the batch plus gradients for every
// parameter tensor (gradient of the mean, not the sum).
template <typename S>
LossGrad<S> loss_and_grad(const ModelParams<S>& params, const ModelSpec& spec,
                          const Batch<S>& batch) {
    ForwardCache<S> cache;
    Tensor<S> logits = forward(params, spec, batch, &cache);
    const std::size_t b = logits.shape[0], classes = logits.shape[1];
    if (batch.labels.size() != b)
        throw DataError("loss_and_grad: batch has no labels");
    for (int y : batch.labels)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw DataError("loss_and_grad: label out of range [0," +
                            std::to_string(classes) + ")");

    double loss = 0.0;
    Tensor<S> dcur = Tensor<S>::zeros(logits.shape);
    for (std::size_t s = 0; s < b; ++s) {
        const S* z = logits.values.data() + s * classes;
        double zmax = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes; ++c)
            zmax = std::max(zmax, static_cast<double>(z[c]));
        double sumexp = 0.0;
        for (std::size_t c = 0; c < classes; ++c)
            sumexp += std::exp(static_cast<double>(z[c]) - zmax);
        double lse = zmax + std::log(sumexp);
        int y = batch.labels[s];
        loss += lse - static_cast<double>(z[y]);
        S* dz = dcur.values.data() + s * classes;
        for (std::size_t c = 0; c < classes; ++c) {
            double p = std::exp(static_cast<double>(z[c]) - zmax) / sumexp;
            double target = (static_cast<std::size_t>(y) == c) ? 1.0 : 0.0;
            dz[c] = static_cast<S>((p - target) / static_cast<double>(b));
        }
    }
    loss /= static_cast<double>(b);
    if (!std::isfinite(loss))
        throw InternalError("loss_and_grad: non-finite loss (training diverged?)");

    LossGrad<S> result;
    result.loss = loss;
    result.grads = zeros_like(params);
    std::size_t entry_idx = result.grads.entries.size();

    for (std::size_t ii = spec.layers.size(); ii-- > 0;) {
        const LayerDesc& d = spec.layers[ii];
        const Tensor<S>& in = cache.layer_inputs[ii];
        if (const auto* conv = std::get_if<Conv2D>(&d)) {
            --entry_idx;
            auto& ge = result.grads.entries[entry_idx];
            if (ge.layer_index != ii)
                throw InternalError("loss_and_grad: param entries out of layer order");
            const auto* e = detail::param_entry(params, ii);
            Tensor<S> din;
            detail::conv2d_backward(*conv, in, e->weight, dcur, ge.weight, ge.bias, din);
            dcur = std::move(din);
        } else if (std::holds_alternative<MaxPool2D>(d)) {
            Tensor<S> din = Tensor<S>::zeros(in.shape);
            const auto& argmax = cache.pool_argmax[ii];
            for (std::size_t k = 0; k < argmax.size(); ++k) din[argmax[k]] += dcur[k];
            dcur = std::move(din);
        } else if (std::holds_alternative<ReLU>(d)) {
            for (std::size_t k = 0; k < dcur.size(); ++k)
                if (!(in[k] > S(0))) dcur[k] = S(0);
        } else if (std::holds_alternative<Flatten>(d)) {
            dcur.shape = in.shape;
        } else if (const auto* dense = std::get_if<Dense>(&d)) {
            --entry_idx;
            auto& ge = result.grads.entries[entry_idx];
            if (ge.layer_index != ii)
                throw InternalError("loss_and_grad: param entries out of layer order");
            const auto* e = detail::param_entry(params, ii);
            const std::size_t in_f = dense->in_features, out_f = dense->out_features;
            Tensor<S> din = Tensor<S>::zeros(in.shape);
            for (std::size_t s = 0; s < b; ++s) {
                const S* x = in.values.data() + s * in_f;
                const S* dy = dcur.values.data() + s * out_f;
                S* dx = din.values.data() + s * in_f;
                for (std::size_t o = 0; o < out_f; ++o) {
                    const S g = dy[o];
                    ge.bias[o] += g;
                    S* dwrow = ge.weight.values.data() + o * in_f;
                    const S* wrow = e->weight.values.data() + o * in_f;
                    for (std::size_t j = 0; j < in_f; ++j) {
                        dwrow[j] += g * x[j];
                        dx[j] += g * wrow[j];
                    }
                }
            }
            dcur = std::move(din);
        }
    }
    return result;
}

// Fraction of samples whose argmax logit matches the label; ties break to
// the lowest class index. Runs in fixed-size chunks, sequentially.
template <typename S>
double evaluate_accuracy(const ModelParams<S>& params, const ModelSpec& spec,
                         const Dataset<S>& test_set) {
    if (test_set.size() == 0) throw DataError("evaluate_accuracy: empty test set");
    constexpr std::size_t kChunk = 256;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < test_set.size(); start += kChunk) {
        std::size_t end = std::min(start + kChunk, test_set.size());
        idx.resize(end - start);
        for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
        Batch<S> batch = gather_batch(test_set, idx);
        Tensor<S> logits = forward(params, spec, batch);
        const std::size_t classes = logits.shape[1];
        for (std::size_t s = 0; s < batch.size(); ++s) {
            const S* z = logits.values.data() + s * classes;
            std::size_t best = 0;
            for (std::size_t c = 1; c < classes; ++c)
                if (z[c] > z[best]) best = c;
            if (static_cast<int>(best) == batch.labels[s]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

}  // namespace fedsim
