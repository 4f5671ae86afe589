#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Central finite differences of the loss versus the analytic gradients, in
// double precision, one small model per layer type. Inputs and parameters
// are resampled until every ReLU pre-activation and every pool window gap
// sits a safe margin away from its kink, so the two-sided difference stays
// on one smooth piece.
struct GradCheckReport {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
};

namespace detail {

inline double kink_margin(const ModelParams<double>& params, const ModelSpec& spec,
                          const Batch<double>& batch) {
    ForwardCache<double> cache;
    forward(params, spec, batch, &cache);
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (std::holds_alternative<ReLU>(spec.layers[i])) {
            for (double v : cache.layer_inputs[i].values)
                margin = std::min(margin, std::abs(v));
        } else if (const auto* pool = std::get_if<MaxPool2D>(&spec.layers[i])) {
            const Tensor<double>& in = cache.layer_inputs[i];
            const std::size_t b = in.shape[0], c = in.shape[1], h = in.shape[2],
                              w = in.shape[3];
            const std::size_t oh = h / pool->window_h, ow = w / pool->window_w;
            for (std::size_t s = 0; s < b; ++s)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t oy = 0; oy < oh; ++oy)
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            double top = -std::numeric_limits<double>::infinity();
                            double second = top;
                            for (std::size_t p = 0; p < pool->window_h; ++p)
                                for (std::size_t q = 0; q < pool->window_w; ++q) {
                                    double v = in[((s * c + ch) * h + oy * pool->window_h + p) * w +
                                                  ox * pool->window_w + q];
                                    if (v > top) {
                                        second = top;
                                        top = v;
                                    } else if (v > second) {
                                        second = v;
                                    }
                                }
                            if (pool->window_h * pool->window_w > 1)
                                margin = std::min(margin, top - second);
                        }
        }
    }
    return margin;
}

struct GradCheckCase {
    std::string name;
    ModelSpec spec;
    std::size_t batch = 3;
    // Required distance of every ReLU pre-activation and pool-window gap
    // from its kink. An h=1e-4 parameter nudge moves these small models'
    // activations by well under 1e-3.
    double margin = 1e-2;
};

inline std::vector<GradCheckCase> gradcheck_cases() {
    std::vector<GradCheckCase> cases;
    cases.push_back({"dense", ModelSpec{{5}, {Dense{5, 3}}}});
    // Dense(1,C) isolates the cross-entropy derivative: the bias gradient is
    // exactly dL/dlogits.
    cases.push_back({"softmax_xent", ModelSpec{{1}, {Dense{1, 10}}}});
    cases.push_back({"relu", ModelSpec{{6}, {Dense{6, 6}, ReLU{}, Dense{6, 4}}}});
    cases.push_back(
        {"conv2d", ModelSpec{{2, 6, 6}, {Conv2D{3, 3, 2, 3}, Flatten{}, Dense{48, 4}}}});
    cases.push_back({"maxpool2d",
                     ModelSpec{{2, 5, 5},
                               {Conv2D{2, 2, 2, 2}, MaxPool2D{2, 2}, Flatten{},
                                Dense{8, 3}}}});
    // The full composition has a few hundred kink sites, so it accepts a
    // slimmer margin to keep rejection sampling fast.
    cases.push_back({"stacked",
                     ModelSpec{{2, 7, 7},
                               {Conv2D{3, 3, 2, 2}, ReLU{}, MaxPool2D{2, 2},
                                Conv2D{2, 2, 2, 3}, ReLU{}, Flatten{}, Dense{3, 6},
                                ReLU{}, Dense{6, 4}}},
                     3, 2e-3});
    return cases;
}

}  // namespace detail

// relative error of analytic vs numeric, floored at magnitude 1 so
// near-zero gradients are judged on absolute error.
inline double grad_rel_error(double analytic, double numeric) {
    double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

inline std::vector<GradCheckReport> run_gradcheck(std::size_t seeds_per_case = 20,
                                                  double step = 1e-4) {
    std::vector<GradCheckReport> reports;
    const std::vector<detail::GradCheckCase> cases = detail::gradcheck_cases();
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        const detail::GradCheckCase& c = cases[ci];
        const std::size_t classes = c.spec.num_classes();
        GradCheckReport report;
        report.name = c.name;
        for (std::size_t seed = 0; seed < seeds_per_case; ++seed) {
            ModelParams<double> params;
            Batch<double> batch;
            bool placed = false;
            for (std::uint64_t attempt = 0; attempt < 500 && !placed; ++attempt) {
                Rng rng = derive_stream(0x6772616463686BULL, ci, seed, attempt);
                params = init_params<double>(c.spec, rng);
                batch.inputs = Tensor<double>::zeros(
                    [&] {
                        std::vector<std::size_t> s{c.batch};
                        s.insert(s.end(), c.spec.input_shape.begin(),
                                 c.spec.input_shape.end());
                        return s;
                    }());
                for (auto& v : batch.inputs.values) v = rng.uniform(-1.5, 1.5);
                batch.labels.resize(c.batch);
                for (auto& y : batch.labels)
                    y = static_cast<int>(rng.next_below(classes));
                placed = detail::kink_margin(params, c.spec, batch) > c.margin;
            }
            if (!placed)
                throw InternalError("gradcheck: could not place " + c.name +
                                    " away from kinks");

            LossGrad<double> analytic = loss_and_grad(params, c.spec, batch);
            for (std::size_t e = 0; e < params.entries.size(); ++e) {
                auto check_tensor = [&](Tensor<double>& w, const Tensor<double>& g) {
                    for (std::size_t i = 0; i < w.size(); ++i) {
                        const double saved = w[i];
                        w[i] = saved + step;
                        double up = loss_and_grad(params, c.spec, batch).loss;
                        w[i] = saved - step;
                        double down = loss_and_grad(params, c.spec, batch).loss;
                        w[i] = saved;
                        double numeric = (up - down) / (2.0 * step);
                        report.max_rel_error =
                            std::max(report.max_rel_error, grad_rel_error(g[i], numeric));
                        ++report.coords_checked;
                    }
                };
                check_tensor(params.entries[e].weight, analytic.grads.entries[e].weight);
                check_tensor(params.entries[e].bias, analytic.grads.entries[e].bias);
            }
        }
        reports.push_back(report);
    }
    return reports;
}

}  // namespace fedsim
