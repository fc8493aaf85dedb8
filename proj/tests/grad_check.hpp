#pragma once

// Central finite-difference gradient checking against each layer's backward
// pass. The scalar objective is sum(R . forward(x)) for a fixed random R.

#include <cmath>
#include <cstdint>
#include <functional>

#include "mpcnn/neural_net.hpp"
#include "mpcnn/rng.hpp"

namespace gradcheck {

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
    return std::fabs(analytic - numeric) / denom;
}

inline mpcnn::Tensor3 random_tensor(std::size_t b, std::size_t l, std::size_t c,
                                    mpcnn::Rng& rng, double lo = -1.0, double hi = 1.0) {
    mpcnn::Tensor3 t(b, l, c);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Largest relative error over the input gradient and every parameter block.
// The forward pass is re-run with a fresh Rng seeded identically each time so
// stochastic layers (dropout) see the same mask in every evaluation.
inline double check_layer(mpcnn::Layer& layer, mpcnn::Tensor3 x, bool training,
                          std::uint64_t ctx_seed, mpcnn::Rng& rng) {
    using mpcnn::LayerContext;
    using mpcnn::Rng;
    using mpcnn::Tensor3;

    auto forward = [&](const Tensor3& input) {
        Rng ctx_rng(ctx_seed);
        LayerContext ctx;
        ctx.training = training;
        ctx.rng = &ctx_rng;
        ctx.threads = 1;
        return layer.forward(input, ctx);
    };

    Tensor3 y = forward(x);
    Tensor3 weight(y.batch, y.length, y.channels);
    for (double& v : weight.data) v = rng.uniform(-1.0, 1.0);

    auto loss_of = [&](const Tensor3& input) {
        const Tensor3 out = forward(input);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * weight.data[i];
        return acc;
    };

    // analytic gradients
    forward(x);
    const Tensor3 dx = layer.backward(weight);
    std::vector<mpcnn::ParamBlock> blocks;
    layer.collect_params(blocks);
    std::vector<std::vector<double>> saved_grads;
    for (const auto& blk : blocks) {
        saved_grads.emplace_back(blk.grads, blk.grads + blk.size);
    }

    double worst = 0.0;
    const double h = 1e-5;

    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = loss_of(x);
        x.data[i] = keep - h;
        const double down = loss_of(x);
        x.data[i] = keep;
        worst = std::max(worst, rel_err(dx.data[i], (up - down) / (2.0 * h)));
    }

    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t i = 0; i < blocks[b].size; ++i) {
            const double keep = blocks[b].values[i];
            blocks[b].values[i] = keep + h;
            const double up = loss_of(x);
            blocks[b].values[i] = keep - h;
            const double down = loss_of(x);
            blocks[b].values[i] = keep;
            worst = std::max(worst, rel_err(saved_grads[b][i], (up - down) / (2.0 * h)));
        }
    }
    return worst;
}

// FD check of d(mean cross-entropy)/d(logits).
inline double check_softmax_ce(mpcnn::Tensor3 logits, const std::vector<int>& labels) {
    const auto analytic = mpcnn::softmax_cross_entropy(logits, labels);
    double worst = 0.0;
    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const double keep = logits.data[i];
        logits.data[i] = keep + h;
        const double up = mpcnn::softmax_cross_entropy(logits, labels).loss;
        logits.data[i] = keep - h;
        const double down = mpcnn::softmax_cross_entropy(logits, labels).loss;
        logits.data[i] = keep;
        worst = std::max(worst, rel_err(analytic.dlogits.data[i], (up - down) / (2.0 * h)));
    }
    return worst;
}

}  // namespace gradcheck
