#include "mpcnn/neural_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "mpcnn/error.hpp"
#include "mpcnn/parallel.hpp"

namespace mpcnn {

namespace {

constexpr std::size_t kBatchGrain = 8;

void ensure_finite(const Tensor3& t, const char* layer) {
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            throw Error("NonFinite", std::string(layer) + " produced a non-finite value");
        }
    }
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

// ---- Conv1D ----------------------------------------------------------------

Conv1D::Conv1D(std::size_t in_channels_, std::size_t filters_, std::size_t kernel_,
               std::size_t stride_)
    : in_channels(in_channels_),
      filters(filters_),
      kernel(kernel_),
      stride(stride_),
      weights(kernel_ * in_channels_ * filters_, 0.0),
      bias(filters_, 0.0),
      grad_weights(weights.size(), 0.0),
      grad_bias(filters_, 0.0) {
    if (kernel == 0 || stride == 0 || filters == 0 || in_channels == 0) {
        throw Error("ShapeMismatch", "conv1d needs positive shape parameters");
    }
}

void Conv1D::init_weights(Rng& rng) {
    const double limit = glorot_limit(kernel * in_channels, kernel * filters);
    for (double& w : weights) w = rng.uniform(-limit, limit);
    std::fill(bias.begin(), bias.end(), 0.0);
}

std::size_t Conv1D::output_length(std::size_t in_len, std::size_t kernel,
                                  std::size_t stride) {
    if (in_len < kernel) throw Error("ShapeMismatch", "input shorter than kernel");
    return (in_len - kernel) / stride + 1;
}

Tensor3 Conv1D::forward(const Tensor3& x, const LayerContext& ctx) {
    if (x.channels != in_channels) {
        throw Error("ShapeMismatch", "conv1d channel mismatch");
    }
    const std::size_t out_len = output_length(x.length, kernel, stride);
    Tensor3 y(x.batch, out_len, filters);
    threads_ = ctx.threads;

    parallel_for_chunked(0, x.batch, kBatchGrain, ctx.threads,
                         [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
            for (std::size_t t = 0; t < out_len; ++t) {
                double* yp = &y.data[(b * out_len + t) * filters];
                for (std::size_t f = 0; f < filters; ++f) yp[f] = bias[f];
                const std::size_t x0 = t * stride;
                for (std::size_t k = 0; k < kernel; ++k) {
                    const double* xp = &x.data[(b * x.length + x0 + k) * in_channels];
                    const double* wp = &weights[k * in_channels * filters];
                    for (std::size_t c = 0; c < in_channels; ++c) {
                        const double xv = xp[c];
                        const double* wrow = wp + c * filters;
                        for (std::size_t f = 0; f < filters; ++f) yp[f] += xv * wrow[f];
                    }
                }
            }
        }
    });

    input_ = x;
    return y;
}

Tensor3 Conv1D::backward(const Tensor3& dy) {
    const Tensor3& x = input_;
    if (dy.channels != filters) throw Error("ShapeMismatch", "conv1d backward channels");
    const std::size_t out_len = dy.length;

    Tensor3 dx(x.batch, x.length, x.channels);

    // per-chunk weight/bias partials, reduced in chunk order so the sums do
    // not depend on the number of workers
    const std::size_t chunks = chunk_count(x.batch, kBatchGrain);
    std::vector<std::vector<double>> dw_parts(chunks), db_parts(chunks);

    parallel_for_chunked(0, x.batch, kBatchGrain, threads_,
                         [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
        auto& dw = dw_parts[chunk];
        auto& db = db_parts[chunk];
        dw.assign(weights.size(), 0.0);
        db.assign(filters, 0.0);
        for (std::size_t b = lo; b < hi; ++b) {
            for (std::size_t t = 0; t < out_len; ++t) {
                const double* dyp = &dy.data[(b * out_len + t) * filters];
                for (std::size_t f = 0; f < filters; ++f) db[f] += dyp[f];
                const std::size_t x0 = t * stride;
                for (std::size_t k = 0; k < kernel; ++k) {
                    const double* xp = &x.data[(b * x.length + x0 + k) * in_channels];
                    double* dxp = &dx.data[(b * x.length + x0 + k) * in_channels];
                    const double* wp = &weights[k * in_channels * filters];
                    double* dwp = &dw[k * in_channels * filters];
                    for (std::size_t c = 0; c < in_channels; ++c) {
                        const double xv = xp[c];
                        const double* wrow = wp + c * filters;
                        double* dwrow = dwp + c * filters;
                        double acc = 0.0;
                        for (std::size_t f = 0; f < filters; ++f) {
                            acc += dyp[f] * wrow[f];
                            dwrow[f] += xv * dyp[f];
                        }
                        dxp[c] += acc;
                    }
                }
            }
        }
    });

    std::fill(grad_weights.begin(), grad_weights.end(), 0.0);
    std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
    for (std::size_t c = 0; c < chunks; ++c) {
        for (std::size_t i = 0; i < weights.size(); ++i) grad_weights[i] += dw_parts[c][i];
        for (std::size_t f = 0; f < filters; ++f) grad_bias[f] += db_parts[c][f];
    }
    return dx;
}

void Conv1D::collect_params(std::vector<ParamBlock>& out) {
    out.push_back({weights.data(), grad_weights.data(), weights.size(), "conv.w"});
    out.push_back({bias.data(), grad_bias.data(), bias.size(), "conv.b"});
}

std::unique_ptr<Layer> Conv1D::clone() const { return std::make_unique<Conv1D>(*this); }

// ---- BatchNorm1D ------------------------------------------------------------

BatchNorm1D::BatchNorm1D(std::size_t channels_, double eps_, double momentum_)
    : channels(channels_),
      eps(eps_),
      momentum(momentum_),
      gamma(channels_, 1.0),
      beta(channels_, 0.0),
      running_mean(channels_, 0.0),
      running_var(channels_, 1.0),
      grad_gamma(channels_, 0.0),
      grad_beta(channels_, 0.0) {}

Tensor3 BatchNorm1D::forward(const Tensor3& x, const LayerContext& ctx) {
    if (x.channels != channels) throw Error("ShapeMismatch", "batchnorm channel mismatch");
    Tensor3 y(x.batch, x.length, x.channels);
    threads_ = ctx.threads;

    if (ctx.training) {
        if (x.batch < 2) throw Error("DegenerateBatch", "batch norm needs batch >= 2");
        x_hat_ = Tensor3(x.batch, x.length, x.channels);
        inv_std_.assign(channels, 0.0);
        const double n = static_cast<double>(x.batch * x.length);

        parallel_for_chunked(0, channels, 8, ctx.threads,
                             [&](std::size_t, std::size_t clo, std::size_t chi) {
            for (std::size_t c = clo; c < chi; ++c) {
                double mean = 0.0;
                for (std::size_t b = 0; b < x.batch; ++b) {
                    for (std::size_t t = 0; t < x.length; ++t) mean += x.at(b, t, c);
                }
                mean /= n;
                double var = 0.0;
                for (std::size_t b = 0; b < x.batch; ++b) {
                    for (std::size_t t = 0; t < x.length; ++t) {
                        const double d = x.at(b, t, c) - mean;
                        var += d * d;
                    }
                }
                var /= n;
                const double inv = 1.0 / std::sqrt(var + eps);
                inv_std_[c] = inv;
                for (std::size_t b = 0; b < x.batch; ++b) {
                    for (std::size_t t = 0; t < x.length; ++t) {
                        const double xh = (x.at(b, t, c) - mean) * inv;
                        x_hat_.at(b, t, c) = xh;
                        y.at(b, t, c) = gamma[c] * xh + beta[c];
                    }
                }
                running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * mean;
                running_var[c] = momentum * running_var[c] + (1.0 - momentum) * var;
            }
        });
    } else {
        for (std::size_t c = 0; c < channels; ++c) {
            const double inv = 1.0 / std::sqrt(running_var[c] + eps);
            const double shift = running_mean[c];
            for (std::size_t b = 0; b < x.batch; ++b) {
                for (std::size_t t = 0; t < x.length; ++t) {
                    y.at(b, t, c) = gamma[c] * ((x.at(b, t, c) - shift) * inv) + beta[c];
                }
            }
        }
    }
    return y;
}

Tensor3 BatchNorm1D::backward(const Tensor3& dy) {
    const Tensor3& xh = x_hat_;
    if (xh.size() != dy.size()) throw Error("ShapeMismatch", "batchnorm backward shape");
    Tensor3 dx(dy.batch, dy.length, dy.channels);
    const double n = static_cast<double>(dy.batch * dy.length);

    parallel_for_chunked(0, channels, 8, threads_,
                         [&](std::size_t, std::size_t clo, std::size_t chi) {
        for (std::size_t c = clo; c < chi; ++c) {
            double sum_dy = 0.0, sum_dy_xh = 0.0;
            for (std::size_t b = 0; b < dy.batch; ++b) {
                for (std::size_t t = 0; t < dy.length; ++t) {
                    sum_dy += dy.at(b, t, c);
                    sum_dy_xh += dy.at(b, t, c) * xh.at(b, t, c);
                }
            }
            grad_beta[c] = sum_dy;
            grad_gamma[c] = sum_dy_xh;
            const double scale = gamma[c] * inv_std_[c] / n;
            for (std::size_t b = 0; b < dy.batch; ++b) {
                for (std::size_t t = 0; t < dy.length; ++t) {
                    dx.at(b, t, c) = scale * (n * dy.at(b, t, c) - sum_dy -
                                              xh.at(b, t, c) * sum_dy_xh);
                }
            }
        }
    });
    return dx;
}

void BatchNorm1D::collect_params(std::vector<ParamBlock>& out) {
    out.push_back({gamma.data(), grad_gamma.data(), gamma.size(), "bn.gamma"});
    out.push_back({beta.data(), grad_beta.data(), beta.size(), "bn.beta"});
}

std::unique_ptr<Layer> BatchNorm1D::clone() const {
    return std::make_unique<BatchNorm1D>(*this);
}

// ---- MaxPool1D ---------------------------------------------------------------

MaxPool1D::MaxPool1D(std::size_t size_, std::size_t stride_) : size(size_), stride(stride_) {
    if (size == 0 || stride == 0) throw Error("ShapeMismatch", "maxpool needs positive size");
}

std::size_t MaxPool1D::output_length(std::size_t in_len, std::size_t size,
                                     std::size_t stride) {
    if (in_len < size) throw Error("ShapeMismatch", "input shorter than pool window");
    return (in_len - size) / stride + 1;
}

Tensor3 MaxPool1D::forward(const Tensor3& x, const LayerContext&) {
    const std::size_t out_len = output_length(x.length, size, stride);
    Tensor3 y(x.batch, out_len, x.channels);
    argmax_.assign(y.size(), 0);
    in_batch_ = x.batch;
    in_length_ = x.length;
    in_channels_ = x.channels;

    for (std::size_t b = 0; b < x.batch; ++b) {
        for (std::size_t t = 0; t < out_len; ++t) {
            const std::size_t x0 = t * stride;
            for (std::size_t c = 0; c < x.channels; ++c) {
                std::size_t best = x0;
                double best_v = x.at(b, x0, c);
                for (std::size_t k = 1; k < size; ++k) {
                    const double v = x.at(b, x0 + k, c);
                    if (v > best_v) {  // first argmax wins ties
                        best_v = v;
                        best = x0 + k;
                    }
                }
                y.at(b, t, c) = best_v;
                argmax_[(b * out_len + t) * x.channels + c] = best;
            }
        }
    }
    return y;
}

Tensor3 MaxPool1D::backward(const Tensor3& dy) {
    Tensor3 dx(in_batch_, in_length_, in_channels_);
    for (std::size_t b = 0; b < dy.batch; ++b) {
        for (std::size_t t = 0; t < dy.length; ++t) {
            for (std::size_t c = 0; c < dy.channels; ++c) {
                const std::size_t src = argmax_[(b * dy.length + t) * dy.channels + c];
                dx.at(b, src, c) += dy.at(b, t, c);
            }
        }
    }
    return dx;
}

std::unique_ptr<Layer> MaxPool1D::clone() const { return std::make_unique<MaxPool1D>(*this); }

// ---- Dropout -----------------------------------------------------------------

Dropout::Dropout(double rate_) : rate(rate_) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error("BadRate", "dropout rate must be in [0, 1)");
}

Tensor3 Dropout::forward(const Tensor3& x, const LayerContext& ctx) {
    if (!ctx.training || rate == 0.0) {
        identity_ = true;
        return x;
    }
    identity_ = false;
    const double scale = 1.0 / (1.0 - rate);
    mask_.assign(x.size(), 0.0);
    Tensor3 y(x.batch, x.length, x.channels);
    // mask generation is a single sequential pass so the RNG stream is
    // independent of the thread count
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (ctx.rng->uniform() >= rate) {
            mask_[i] = scale;
            y.data[i] = x.data[i] * scale;
        }
    }
    return y;
}

Tensor3 Dropout::backward(const Tensor3& dy) {
    if (identity_) return dy;
    Tensor3 dx(dy.batch, dy.length, dy.channels);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] = dy.data[i] * mask_[i];
    return dx;
}

std::unique_ptr<Layer> Dropout::clone() const { return std::make_unique<Dropout>(*this); }

// ---- GlobalMaxPool -------------------------------------------------------------

Tensor3 GlobalMaxPool::forward(const Tensor3& x, const LayerContext&) {
    Tensor3 y(x.batch, 1, x.channels);
    argmax_.assign(x.batch * x.channels, 0);
    in_batch_ = x.batch;
    in_length_ = x.length;
    in_channels_ = x.channels;
    for (std::size_t b = 0; b < x.batch; ++b) {
        for (std::size_t c = 0; c < x.channels; ++c) {
            std::size_t best = 0;
            double best_v = x.at(b, 0, c);
            for (std::size_t t = 1; t < x.length; ++t) {
                const double v = x.at(b, t, c);
                if (v > best_v) {
                    best_v = v;
                    best = t;
                }
            }
            y.at(b, 0, c) = best_v;
            argmax_[b * x.channels + c] = best;
        }
    }
    return y;
}

Tensor3 GlobalMaxPool::backward(const Tensor3& dy) {
    Tensor3 dx(in_batch_, in_length_, in_channels_);
    for (std::size_t b = 0; b < dy.batch; ++b) {
        for (std::size_t c = 0; c < dy.channels; ++c) {
            dx.at(b, argmax_[b * dy.channels + c], c) += dy.at(b, 0, c);
        }
    }
    return dx;
}

std::unique_ptr<Layer> GlobalMaxPool::clone() const {
    return std::make_unique<GlobalMaxPool>(*this);
}

// ---- Dense ---------------------------------------------------------------------

Dense::Dense(std::size_t in_, std::size_t units_, Activation activation_)
    : in(in_),
      units(units_),
      activation(activation_),
      weights(in_ * units_, 0.0),
      bias(units_, 0.0),
      grad_weights(weights.size(), 0.0),
      grad_bias(units_, 0.0) {}

void Dense::init_weights(Rng& rng) {
    const double limit = glorot_limit(in, units);
    for (double& w : weights) w = rng.uniform(-limit, limit);
    std::fill(bias.begin(), bias.end(), 0.0);
}

Tensor3 Dense::forward(const Tensor3& x, const LayerContext&) {
    if (x.length != 1 || x.channels != in) throw Error("ShapeMismatch", "dense input shape");
    Tensor3 y(x.batch, 1, units);
    for (std::size_t b = 0; b < x.batch; ++b) {
        double* yp = &y.data[b * units];
        for (std::size_t u = 0; u < units; ++u) yp[u] = bias[u];
        const double* xp = &x.data[b * in];
        for (std::size_t i = 0; i < in; ++i) {
            const double xv = xp[i];
            const double* wrow = &weights[i * units];
            for (std::size_t u = 0; u < units; ++u) yp[u] += xv * wrow[u];
        }
    }
    input_ = x;
    pre_activation_ = y;
    if (activation == Activation::relu) {
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    }
    return y;
}

Tensor3 Dense::backward(const Tensor3& dy_in) {
    Tensor3 dy = dy_in;
    if (activation == Activation::relu) {
        for (std::size_t i = 0; i < dy.size(); ++i) {
            if (pre_activation_.data[i] <= 0.0) dy.data[i] = 0.0;
        }
    }
    const Tensor3& x = input_;
    Tensor3 dx(x.batch, 1, in);
    std::fill(grad_weights.begin(), grad_weights.end(), 0.0);
    std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
    for (std::size_t b = 0; b < x.batch; ++b) {
        const double* dyp = &dy.data[b * units];
        for (std::size_t u = 0; u < units; ++u) grad_bias[u] += dyp[u];
        const double* xp = &x.data[b * in];
        double* dxp = &dx.data[b * in];
        for (std::size_t i = 0; i < in; ++i) {
            const double xv = xp[i];
            const double* wrow = &weights[i * units];
            double* dwrow = &grad_weights[i * units];
            double acc = 0.0;
            for (std::size_t u = 0; u < units; ++u) {
                acc += dyp[u] * wrow[u];
                dwrow[u] += xv * dyp[u];
            }
            dxp[i] = acc;
        }
    }
    return dx;
}

void Dense::collect_params(std::vector<ParamBlock>& out) {
    out.push_back({weights.data(), grad_weights.data(), weights.size(), "dense.w"});
    out.push_back({bias.data(), grad_bias.data(), bias.size(), "dense.b"});
}

std::unique_ptr<Layer> Dense::clone() const { return std::make_unique<Dense>(*this); }

// ---- loss -----------------------------------------------------------------------

SoftmaxCeResult softmax_cross_entropy(const Tensor3& logits, const std::vector<int>& labels) {
    if (logits.length != 1) throw Error("ShapeMismatch", "logits must have length 1");
    if (logits.batch != labels.size()) throw Error("ShapeMismatch", "labels/batch mismatch");
    const std::size_t n_class = logits.channels;

    SoftmaxCeResult r;
    r.dlogits = Tensor3(logits.batch, 1, n_class);
    r.probs.assign(logits.batch, std::vector<double>(n_class, 0.0));

    double total = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(logits.batch);
    for (std::size_t b = 0; b < logits.batch; ++b) {
        const int label = labels[b];
        if (label < 0 || static_cast<std::size_t>(label) >= n_class) {
            throw Error("ShapeMismatch", "label out of range");
        }
        const double* lp = &logits.data[b * n_class];
        double mx = lp[0];
        for (std::size_t c = 1; c < n_class; ++c) mx = std::max(mx, lp[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < n_class; ++c) denom += std::exp(lp[c] - mx);
        const double log_denom = std::log(denom);
        for (std::size_t c = 0; c < n_class; ++c) {
            const double p = std::exp(lp[c] - mx) / denom;
            r.probs[b][c] = p;
            r.dlogits.data[b * n_class + c] =
                (p - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0)) * inv_batch;
        }
        total += -(lp[label] - mx - log_denom);
    }
    r.loss = total * inv_batch;
    return r;
}

// ---- optimizer --------------------------------------------------------------------

void adam_step(double* params, const double* grads, std::size_t n, AdamMoments& moments,
               std::size_t t, double lr, double beta1, double beta2, double eps) {
    if (moments.m.size() != n) {
        moments.m.assign(n, 0.0);
        moments.v.assign(n, 0.0);
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        moments.m[i] = beta1 * moments.m[i] + (1.0 - beta1) * g;
        moments.v[i] = beta2 * moments.v[i] + (1.0 - beta2) * g * g;
        const double m_hat = moments.m[i] / bc1;
        const double v_hat = moments.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

double lr_schedule(std::size_t epoch_1based, double lr0) {
    if (epoch_1based <= 70) return lr0;
    const std::size_t decades = (epoch_1based - 71) / 10 + 1;
    double lr = lr0;
    for (std::size_t i = 0; i < decades; ++i) lr *= 0.9;
    return lr;
}

// ---- model ------------------------------------------------------------------------

Model Model::make_lenet5(std::size_t input_length, std::size_t input_channels,
                         const NetConfig& nc, Rng& rng) {
    Model m;
    m.input_length = input_length;
    m.input_channels = input_channels;

    auto conv = [&](std::size_t in_c, std::size_t f) {
        auto layer = std::make_unique<Conv1D>(in_c, f, 5, 2);
        layer->init_weights(rng);
        return layer;
    };
    auto dense = [&](std::size_t in, std::size_t units, Activation act) {
        auto layer = std::make_unique<Dense>(in, units, act);
        layer->init_weights(rng);
        return layer;
    };

    m.layers.push_back(conv(input_channels, 64));
    m.layers.push_back(std::make_unique<BatchNorm1D>(64, nc.bn_eps, nc.bn_momentum));
    m.layers.push_back(std::make_unique<MaxPool1D>(3, 3));
    m.layers.push_back(std::make_unique<Dropout>(nc.dropout_rate));
    m.layers.push_back(conv(64, 96));
    m.layers.push_back(std::make_unique<BatchNorm1D>(96, nc.bn_eps, nc.bn_momentum));
    m.layers.push_back(std::make_unique<MaxPool1D>(3, 3));
    m.layers.push_back(std::make_unique<Dropout>(nc.dropout_rate));
    m.layers.push_back(conv(96, 128));
    m.layers.push_back(std::make_unique<BatchNorm1D>(128, nc.bn_eps, nc.bn_momentum));
    m.layers.push_back(std::make_unique<GlobalMaxPool>());
    m.layers.push_back(std::make_unique<Dropout>(nc.dropout_rate));
    m.layers.push_back(dense(128, 128, Activation::relu));
    m.layers.push_back(std::make_unique<Dropout>(nc.dropout_rate));
    m.layers.push_back(dense(128, 64, Activation::relu));
    m.layers.push_back(std::make_unique<Dropout>(nc.dropout_rate));
    m.layers.push_back(dense(64, 2, Activation::none));

    const auto chain = m.shape_chain();  // validates feasibility for this length
    if (input_length == 900) {
        const std::vector<std::size_t> expected = {448, 149, 73, 24, 10, 128, 128, 64, 2};
        if (chain != expected) {
            throw Error("ShapeMismatch", "layer stack does not reproduce the 900-input chain");
        }
    }
    return m;
}

std::vector<std::size_t> Model::shape_chain() const {
    std::vector<std::size_t> chain;
    std::size_t len = input_length;
    std::size_t ch = input_channels;
    for (const auto& layer : layers) {
        if (const auto* c = dynamic_cast<const Conv1D*>(layer.get())) {
            len = Conv1D::output_length(len, c->kernel, c->stride);
            ch = c->filters;
            chain.push_back(len);
        } else if (const auto* p = dynamic_cast<const MaxPool1D*>(layer.get())) {
            len = MaxPool1D::output_length(len, p->size, p->stride);
            chain.push_back(len);
        } else if (dynamic_cast<const GlobalMaxPool*>(layer.get())) {
            len = 1;
            chain.push_back(ch);
        } else if (const auto* d = dynamic_cast<const Dense*>(layer.get())) {
            ch = d->units;
            chain.push_back(ch);
        }
    }
    return chain;
}

Tensor3 Model::forward(const Tensor3& x, const LayerContext& ctx) {
    if (x.length != input_length || x.channels != input_channels) {
        throw Error("ShapeMismatch", "model expects length " + std::to_string(input_length) +
                                         " x " + std::to_string(input_channels) + " input");
    }
    Tensor3 cur = x;
    for (auto& layer : layers) {
        cur = layer->forward(cur, ctx);
        ensure_finite(cur, layer->name());
    }
    return cur;
}

Tensor3 Model::backward(const Tensor3& dy) {
    Tensor3 cur = dy;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        cur = (*it)->backward(cur);
    }
    return cur;
}

std::vector<ParamBlock> Model::params() {
    std::vector<ParamBlock> out;
    for (auto& layer : layers) layer->collect_params(out);
    return out;
}

Model Model::clone() const {
    Model m;
    m.input_length = input_length;
    m.input_channels = input_channels;
    m.provenance = provenance;
    m.layers.reserve(layers.size());
    for (const auto& layer : layers) m.layers.push_back(layer->clone());
    return m;
}

namespace {

void quantize_vec(std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace

void Model::quantize_to_storage() {
    for (auto& layer : layers) {
        if (auto* c = dynamic_cast<Conv1D*>(layer.get())) {
            quantize_vec(c->weights);
            quantize_vec(c->bias);
        } else if (auto* bn = dynamic_cast<BatchNorm1D*>(layer.get())) {
            quantize_vec(bn->gamma);
            quantize_vec(bn->beta);
            quantize_vec(bn->running_mean);
            quantize_vec(bn->running_var);
        } else if (auto* d = dynamic_cast<Dense*>(layer.get())) {
            quantize_vec(d->weights);
            quantize_vec(d->bias);
        }
    }
}

// ---- serialization -------------------------------------------------------------

namespace {

constexpr std::uint8_t kTagConv = 1;
constexpr std::uint8_t kTagBatchNorm = 2;
constexpr std::uint8_t kTagMaxPool = 3;
constexpr std::uint8_t kTagDropout = 4;
constexpr std::uint8_t kTagGlobalMaxPool = 5;
constexpr std::uint8_t kTagDense = 6;

void put_f32_vec(std::ostream& out, const std::vector<double>& v) {
    for (double x : v) detail::put_f32(out, static_cast<float>(x));
}

void get_f32_vec(std::istream& in, std::vector<double>& v, const char* what) {
    for (double& x : v) x = static_cast<double>(detail::get_f32(in, what));
}

}  // namespace

void Model::save(std::ostream& out, const std::string& prov) const {
    using namespace detail;
    out.write("MPNN", 4);
    put_u32(out, 1);  // version
    put_u32(out, static_cast<std::uint32_t>(input_length));
    put_u32(out, static_cast<std::uint32_t>(input_channels));
    put_u32(out, static_cast<std::uint32_t>(layers.size()));
    for (const auto& layer : layers) {
        if (const auto* c = dynamic_cast<const Conv1D*>(layer.get())) {
            put_u8(out, kTagConv);
            put_u32(out, static_cast<std::uint32_t>(c->in_channels));
            put_u32(out, static_cast<std::uint32_t>(c->filters));
            put_u32(out, static_cast<std::uint32_t>(c->kernel));
            put_u32(out, static_cast<std::uint32_t>(c->stride));
            put_f32_vec(out, c->weights);
            put_f32_vec(out, c->bias);
        } else if (const auto* bn = dynamic_cast<const BatchNorm1D*>(layer.get())) {
            put_u8(out, kTagBatchNorm);
            put_u32(out, static_cast<std::uint32_t>(bn->channels));
            put_f64(out, bn->eps);
            put_f64(out, bn->momentum);
            put_f32_vec(out, bn->gamma);
            put_f32_vec(out, bn->beta);
            put_f32_vec(out, bn->running_mean);
            put_f32_vec(out, bn->running_var);
        } else if (const auto* p = dynamic_cast<const MaxPool1D*>(layer.get())) {
            put_u8(out, kTagMaxPool);
            put_u32(out, static_cast<std::uint32_t>(p->size));
            put_u32(out, static_cast<std::uint32_t>(p->stride));
        } else if (const auto* d = dynamic_cast<const Dropout*>(layer.get())) {
            put_u8(out, kTagDropout);
            put_f32(out, static_cast<float>(d->rate));
        } else if (dynamic_cast<const GlobalMaxPool*>(layer.get())) {
            put_u8(out, kTagGlobalMaxPool);
        } else if (const auto* d = dynamic_cast<const Dense*>(layer.get())) {
            put_u8(out, kTagDense);
            put_u32(out, static_cast<std::uint32_t>(d->in));
            put_u32(out, static_cast<std::uint32_t>(d->units));
            put_u8(out, static_cast<std::uint8_t>(d->activation));
            put_f32_vec(out, d->weights);
            put_f32_vec(out, d->bias);
        } else {
            throw Error("IoError", "unknown layer type in save");
        }
    }
    put_u32(out, static_cast<std::uint32_t>(prov.size()));
    out.write(prov.data(), static_cast<std::streamsize>(prov.size()));
}

Model Model::load(std::istream& in) {
    using namespace detail;
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "MPNN", 4) != 0) {
        throw Error("BadMagic", "not a model file");
    }
    const std::uint32_t version = get_u32(in, "model");
    if (version != 1) throw Error("UnsupportedFormat", "model version " + std::to_string(version));

    Model m;
    m.input_length = get_u32(in, "model");
    m.input_channels = get_u32(in, "model");
    const std::uint32_t count = get_u32(in, "model");
    if (m.input_length > 10'000'000 || m.input_channels > 1024 || count > 4096) {
        throw Error("UnsupportedFormat", "implausible model header");
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint8_t tag = get_u8(in, "model");
        switch (tag) {
            case kTagConv: {
                const std::uint32_t in_c = get_u32(in, "conv");
                const std::uint32_t f = get_u32(in, "conv");
                const std::uint32_t k = get_u32(in, "conv");
                const std::uint32_t s = get_u32(in, "conv");
                auto layer = std::make_unique<Conv1D>(in_c, f, k, s);
                get_f32_vec(in, layer->weights, "conv.w");
                get_f32_vec(in, layer->bias, "conv.b");
                m.layers.push_back(std::move(layer));
                break;
            }
            case kTagBatchNorm: {
                const std::uint32_t ch = get_u32(in, "bn");
                const double eps = get_f64(in, "bn");
                const double momentum = get_f64(in, "bn");
                auto layer = std::make_unique<BatchNorm1D>(ch, eps, momentum);
                get_f32_vec(in, layer->gamma, "bn");
                get_f32_vec(in, layer->beta, "bn");
                get_f32_vec(in, layer->running_mean, "bn");
                get_f32_vec(in, layer->running_var, "bn");
                m.layers.push_back(std::move(layer));
                break;
            }
            case kTagMaxPool: {
                const std::uint32_t size = get_u32(in, "pool");
                const std::uint32_t stride = get_u32(in, "pool");
                m.layers.push_back(std::make_unique<MaxPool1D>(size, stride));
                break;
            }
            case kTagDropout: {
                const float rate = get_f32(in, "dropout");
                m.layers.push_back(std::make_unique<Dropout>(rate));
                break;
            }
            case kTagGlobalMaxPool:
                m.layers.push_back(std::make_unique<GlobalMaxPool>());
                break;
            case kTagDense: {
                const std::uint32_t d_in = get_u32(in, "dense");
                const std::uint32_t units = get_u32(in, "dense");
                const std::uint8_t act = get_u8(in, "dense");
                auto layer = std::make_unique<Dense>(d_in, units,
                                                     act ? Activation::relu : Activation::none);
                get_f32_vec(in, layer->weights, "dense.w");
                get_f32_vec(in, layer->bias, "dense.b");
                m.layers.push_back(std::move(layer));
                break;
            }
            default:
                throw Error("UnsupportedFormat", "unknown layer tag " + std::to_string(tag));
        }
    }
    std::uint32_t plen = 0;
    unsigned char b[4];
    if (in.read(reinterpret_cast<char*>(b), 4)) {
        plen = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
        std::string text(plen, '\0');
        if (in.read(text.data(), plen)) m.provenance = std::move(text);
    }
    return m;
}

void Model::save_file(const std::string& path, const std::string& prov) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot open " + path + " for writing");
    save(out, prov);
    if (!out) throw Error("IoError", "write failed: " + path);
}

Model Model::load_file(const std::string& path, std::string* prov) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + path);
    Model m = load(in);
    if (prov) *prov = m.provenance;
    return m;
}

// ---- training -----------------------------------------------------------------------

void stratified_split(const std::vector<Label>& labels, double val_fraction, Rng& rng,
                      std::vector<std::size_t>& train_idx, std::vector<std::size_t>& val_idx) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw Error("BadConfig", "val_fraction must lie in (0, 1)");
    }
    train_idx.clear();
    val_idx.clear();
    for (Label cls : {Label::N, Label::A}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) idx.push_back(i);
        }
        if (idx.empty()) continue;
        if (idx.size() < 2) {
            throw Error("EmptyClass", "cannot split a single-segment class");
        }
        rng.shuffle(idx);
        std::size_t val_n = static_cast<std::size_t>(
            std::llround(val_fraction * static_cast<double>(idx.size())));
        val_n = std::clamp<std::size_t>(val_n, 1, idx.size() - 1);
        val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(val_n));
        train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(val_n),
                         idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
}

Tensor3 segments_to_tensor(const std::vector<FeatureSegment>& features,
                           const std::vector<std::size_t>& indices) {
    if (indices.empty()) return {};
    const std::size_t length = features[indices[0]].length;
    const std::size_t channels = features[indices[0]].channels.size();
    Tensor3 x(indices.size(), length, channels);
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const FeatureSegment& seg = features[indices[b]];
        if (seg.length != length || seg.channels.size() != channels) {
            throw Error("ShapeMismatch", "mixed feature shapes in one batch");
        }
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t t = 0; t < length; ++t) {
                x.at(b, t, c) = seg.values[c * length + t];
            }
        }
    }
    return x;
}

namespace {

struct EvalOutcome {
    double loss = 0.0;
    double acc = 0.0;
};

EvalOutcome evaluate_set(Model& model, const std::vector<FeatureSegment>& features,
                         const std::vector<std::size_t>& indices, std::size_t batch_size,
                         unsigned threads) {
    LayerContext ctx;
    ctx.training = false;
    ctx.threads = threads;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t pos = 0; pos < indices.size(); pos += batch_size) {
        const std::size_t hi = std::min(indices.size(), pos + batch_size);
        std::vector<std::size_t> batch(indices.begin() + static_cast<std::ptrdiff_t>(pos),
                                       indices.begin() + static_cast<std::ptrdiff_t>(hi));
        Tensor3 x = segments_to_tensor(features, batch);
        std::vector<int> labels;
        labels.reserve(batch.size());
        for (std::size_t i : batch) labels.push_back(static_cast<int>(features[i].label));
        const Tensor3 logits = model.forward(x, ctx);
        const SoftmaxCeResult r = softmax_cross_entropy(logits, labels);
        loss_sum += r.loss * static_cast<double>(batch.size());
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const int pred = r.probs[b][1] > r.probs[b][0] ? 1 : 0;
            if (pred == labels[b]) ++correct;
        }
    }
    EvalOutcome out;
    if (!indices.empty()) {
        out.loss = loss_sum / static_cast<double>(indices.size());
        out.acc = static_cast<double>(correct) / static_cast<double>(indices.size());
    }
    return out;
}

}  // namespace

TrainResult train(const std::vector<FeatureSegment>& features, const TrainConfig& cfg) {
    if (features.empty()) throw Error("EmptyClass", "no feature segments");
    std::size_t count_a = 0, count_n = 0;
    for (const auto& f : features) (f.label == Label::A ? count_a : count_n) += 1;
    if (count_a < 2 || count_n < 2) {
        throw Error("EmptyClass", "need at least 2 segments per class (A=" +
                                      std::to_string(count_a) + ", N=" + std::to_string(count_n) +
                                      ")");
    }
    if (cfg.epochs < 1) throw Error("BadConfig", "epochs must be >= 1");

    const std::size_t length = features[0].length;
    const std::size_t channels = features[0].channels.size();

    Rng rng(cfg.seed);
    TrainResult result;
    Model model = Model::make_lenet5(length, channels, cfg.net, rng);

    std::vector<Label> labels;
    labels.reserve(features.size());
    for (const auto& f : features) labels.push_back(f.label);
    std::vector<std::size_t> train_idx, val_idx;
    stratified_split(labels, cfg.val_fraction, rng, train_idx, val_idx);
    result.train_count = train_idx.size();
    result.val_count = val_idx.size();
    result.train_indices = train_idx;
    result.val_indices = val_idx;

    std::vector<ParamBlock> blocks = model.params();
    std::vector<AdamMoments> moments(blocks.size());
    std::size_t step = 0;

    LayerContext train_ctx;
    train_ctx.training = true;
    train_ctx.rng = &rng;
    train_ctx.threads = cfg.threads;

    result.best_val_acc = -1.0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg.lr0);
        rng.shuffle(train_idx);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t pos = 0;
        while (pos < train_idx.size()) {
            std::size_t hi = std::min(train_idx.size(), pos + cfg.batch_size);
            // batch norm cannot normalize a single sample; fold a trailing
            // singleton into the previous batch
            if (train_idx.size() - hi == 1) hi = train_idx.size();
            std::vector<std::size_t> batch(train_idx.begin() + static_cast<std::ptrdiff_t>(pos),
                                           train_idx.begin() + static_cast<std::ptrdiff_t>(hi));
            pos = hi;

            Tensor3 x = segments_to_tensor(features, batch);
            std::vector<int> batch_labels;
            batch_labels.reserve(batch.size());
            for (std::size_t i : batch) batch_labels.push_back(static_cast<int>(features[i].label));

            const Tensor3 logits = model.forward(x, train_ctx);
            const SoftmaxCeResult r = softmax_cross_entropy(logits, batch_labels);
            loss_sum += r.loss * static_cast<double>(batch.size());
            for (std::size_t b = 0; b < batch.size(); ++b) {
                const int pred = r.probs[b][1] > r.probs[b][0] ? 1 : 0;
                if (pred == batch_labels[b]) ++correct;
            }

            model.backward(r.dlogits);
            ++step;
            for (std::size_t i = 0; i < blocks.size(); ++i) {
                adam_step(blocks[i].values, blocks[i].grads, blocks[i].size, moments[i], step,
                          lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = loss_sum / static_cast<double>(train_idx.size());
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(train_idx.size());
        const EvalOutcome val = evaluate_set(model, features, val_idx, cfg.batch_size,
                                             cfg.threads);
        stats.val_loss = val.loss;
        stats.val_acc = val.acc;
        result.history.push_back(stats);

        if (val.acc > result.best_val_acc) {
            result.best_val_acc = val.acc;
            result.best_epoch = epoch;
            result.best_model = model.clone();
        }
    }

    result.final_model = std::move(model);
    result.final_model.quantize_to_storage();
    result.best_model.quantize_to_storage();
    return result;
}

std::vector<std::vector<double>> predict(Model& model,
                                         const std::vector<FeatureSegment>& features,
                                         std::size_t batch_size, unsigned threads) {
    for (const auto& f : features) {
        if (f.length != model.input_length || f.channels.size() != model.input_channels) {
            throw Error("ShapeMismatch", "feature shape does not match the model input");
        }
    }
    LayerContext ctx;
    ctx.training = false;
    ctx.threads = threads;

    std::vector<std::vector<double>> probs;
    probs.reserve(features.size());
    std::vector<std::size_t> indices(features.size());
    std::iota(indices.begin(), indices.end(), 0);
    for (std::size_t pos = 0; pos < indices.size(); pos += batch_size) {
        const std::size_t hi = std::min(indices.size(), pos + batch_size);
        std::vector<std::size_t> batch(indices.begin() + static_cast<std::ptrdiff_t>(pos),
                                       indices.begin() + static_cast<std::ptrdiff_t>(hi));
        Tensor3 x = segments_to_tensor(features, batch);
        const Tensor3 logits = model.forward(x, ctx);
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const double* lp = &logits.data[b * logits.channels];
            const double mx = std::max(lp[0], lp[1]);
            const double e0 = std::exp(lp[0] - mx);
            const double e1 = std::exp(lp[1] - mx);
            const double denom = e0 + e1;
            probs.push_back({e0 / denom, e1 / denom});
        }
    }
    return probs;
}

std::string format_history(const std::vector<EpochStats>& history, std::size_t train_count,
                           std::size_t val_count) {
    std::ostringstream out;
    out << "# train_segments=" << train_count << "\n";
    out << "# val_segments=" << val_count << "\n";
    out << "epoch lr train_loss train_acc val_loss val_acc\n";
    char buf[160];
    for (const auto& s : history) {
        std::snprintf(buf, sizeof(buf), "%zu %.9g %.6f %.6f %.6f %.6f\n", s.epoch, s.lr,
                      s.train_loss, s.train_acc, s.val_loss, s.val_acc);
        out << buf;
    }
    return out.str();
}

}  // namespace mpcnn
