#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mpcnn/mp_features.hpp"
#include "mpcnn/rng.hpp"

namespace mpcnn {

// batch x length x channels, channels fastest. All arithmetic is double;
// files store float32 and models are rounded to that precision when saved.
struct Tensor3 {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::size_t channels = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(std::size_t b, std::size_t l, std::size_t c)
        : batch(b), length(l), channels(c), data(b * l * c, 0.0) {}

    double& at(std::size_t b, std::size_t t, std::size_t c) {
        return data[(b * length + t) * channels + c];
    }
    double at(std::size_t b, std::size_t t, std::size_t c) const {
        return data[(b * length + t) * channels + c];
    }
    std::size_t size() const { return data.size(); }
};

// View of one trainable array plus its gradient accumulator.
struct ParamBlock {
    double* values = nullptr;
    double* grads = nullptr;
    std::size_t size = 0;
    const char* name = "";
};

struct LayerContext {
    bool training = false;
    Rng* rng = nullptr;      // only consumed by dropout in training mode
    unsigned threads = 1;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor3 forward(const Tensor3& x, const LayerContext& ctx) = 0;
    virtual Tensor3 backward(const Tensor3& dy) = 0;
    virtual void collect_params(std::vector<ParamBlock>& out) { (void)out; }
    virtual const char* name() const = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;
};

// ---- layers -------------------------------------------------------------------

// Valid (no padding) strided cross-correlation.
class Conv1D : public Layer {
public:
    Conv1D(std::size_t in_channels, std::size_t filters, std::size_t kernel,
           std::size_t stride);
    void init_weights(Rng& rng);

    Tensor3 forward(const Tensor3& x, const LayerContext& ctx) override;
    Tensor3 backward(const Tensor3& dy) override;
    void collect_params(std::vector<ParamBlock>& out) override;
    const char* name() const override { return "conv1d"; }
    std::unique_ptr<Layer> clone() const override;

    static std::size_t output_length(std::size_t in_len, std::size_t kernel,
                                     std::size_t stride);

    std::size_t in_channels, filters, kernel, stride;
    std::vector<double> weights;  // [k][c_in][f], f fastest
    std::vector<double> bias;     // [f]
    std::vector<double> grad_weights, grad_bias;

private:
    Tensor3 input_;
    unsigned threads_ = 1;
};

class BatchNorm1D : public Layer {
public:
    BatchNorm1D(std::size_t channels, double eps, double momentum);

    Tensor3 forward(const Tensor3& x, const LayerContext& ctx) override;
    Tensor3 backward(const Tensor3& dy) override;
    void collect_params(std::vector<ParamBlock>& out) override;
    const char* name() const override { return "batchnorm1d"; }
    std::unique_ptr<Layer> clone() const override;

    std::size_t channels;
    double eps, momentum;
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;
    std::vector<double> grad_gamma, grad_beta;

private:
    Tensor3 x_hat_;
    std::vector<double> inv_std_;
    unsigned threads_ = 1;
};

class MaxPool1D : public Layer {
public:
    MaxPool1D(std::size_t size, std::size_t stride);

    Tensor3 forward(const Tensor3& x, const LayerContext& ctx) override;
    Tensor3 backward(const Tensor3& dy) override;
    const char* name() const override { return "maxpool1d"; }
    std::unique_ptr<Layer> clone() const override;

    static std::size_t output_length(std::size_t in_len, std::size_t size,
                                     std::size_t stride);

    std::size_t size, stride;

private:
    std::vector<std::size_t> argmax_;
    std::size_t in_batch_ = 0, in_length_ = 0, in_channels_ = 0;
};

// Inverted dropout: survivors are scaled by 1/(1-rate) at training time so
// inference is the identity.
class Dropout : public Layer {
public:
    explicit Dropout(double rate);

    Tensor3 forward(const Tensor3& x, const LayerContext& ctx) override;
    Tensor3 backward(const Tensor3& dy) override;
    const char* name() const override { return "dropout"; }
    std::unique_ptr<Layer> clone() const override;

    double rate;

private:
    std::vector<double> mask_;
    bool identity_ = true;
};

class GlobalMaxPool : public Layer {
public:
    Tensor3 forward(const Tensor3& x, const LayerContext& ctx) override;
    Tensor3 backward(const Tensor3& dy) override;
    const char* name() const override { return "global_maxpool"; }
    std::unique_ptr<Layer> clone() const override;

private:
    std::vector<std::size_t> argmax_;
    std::size_t in_batch_ = 0, in_length_ = 0, in_channels_ = 0;
};

enum class Activation : std::uint8_t { none = 0, relu = 1 };

// Affine map over the channel dimension; expects length == 1.
class Dense : public Layer {
public:
    Dense(std::size_t in, std::size_t units, Activation activation);
    void init_weights(Rng& rng);

    Tensor3 forward(const Tensor3& x, const LayerContext& ctx) override;
    Tensor3 backward(const Tensor3& dy) override;
    void collect_params(std::vector<ParamBlock>& out) override;
    const char* name() const override { return "dense"; }
    std::unique_ptr<Layer> clone() const override;

    std::size_t in, units;
    Activation activation;
    std::vector<double> weights;  // [in][units], units fastest
    std::vector<double> bias;
    std::vector<double> grad_weights, grad_bias;

private:
    Tensor3 input_;
    Tensor3 pre_activation_;
};

// ---- loss / optimizer ----------------------------------------------------------

struct SoftmaxCeResult {
    double loss = 0.0;                 // mean over the batch
    Tensor3 dlogits;                   // d loss / d logits
    std::vector<std::vector<double>> probs;  // per sample class probabilities
};

SoftmaxCeResult softmax_cross_entropy(const Tensor3& logits,
                                      const std::vector<int>& labels);

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

// Bias-corrected Adam update; t is 1-based.
void adam_step(double* params, const double* grads, std::size_t n, AdamMoments& moments,
               std::size_t t, double lr, double beta1, double beta2, double eps);

// Constant for the first 70 epochs, then 10% off every ten epochs.
double lr_schedule(std::size_t epoch_1based, double lr0);

// ---- model ----------------------------------------------------------------------

struct NetConfig {
    double dropout_rate = 0.5;
    double bn_eps = 1e-3;
    double bn_momentum = 0.99;
};

class Model {
public:
    // The modified LeNet-5 stack: three (conv, batch-norm, pool) stages with
    // dropout, a global max pool, two relu dense layers and a 2-unit output.
    static Model make_lenet5(std::size_t input_length, std::size_t input_channels,
                             const NetConfig& nc, Rng& rng);

    Tensor3 forward(const Tensor3& x, const LayerContext& ctx);
    Tensor3 backward(const Tensor3& dy);
    std::vector<ParamBlock> params();

    // Significant dimension after each layer that changes it (conv/pool
    // lengths, then unit counts).
    std::vector<std::size_t> shape_chain() const;

    void save(std::ostream& out, const std::string& provenance) const;
    static Model load(std::istream& in);

    void save_file(const std::string& path, const std::string& provenance) const;
    static Model load_file(const std::string& path, std::string* provenance = nullptr);

    // Round every parameter and running statistic to float32, the storage
    // precision; a saved-then-loaded model then predicts bit-identically.
    void quantize_to_storage();

    Model clone() const;

    std::size_t input_length = 0;
    std::size_t input_channels = 0;
    std::vector<std::unique_ptr<Layer>> layers;
    std::string provenance;  // populated by load
};

// ---- training ---------------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    double lr0 = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-7;
    double val_fraction = 0.30;
    std::uint64_t seed = 42;
    NetConfig net;
    unsigned threads = 1;
};

struct EpochStats {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainResult {
    Model final_model;
    Model best_model;      // highest validation accuracy, earliest epoch on ties
    std::size_t best_epoch = 0;
    double best_val_acc = 0.0;
    std::vector<EpochStats> history;
    std::size_t train_count = 0;
    std::size_t val_count = 0;
    std::vector<std::size_t> train_indices;  // into the features vector, sorted
    std::vector<std::size_t> val_indices;
};

// Seeded stratified index split; val_count per class = round(fraction * n).
void stratified_split(const std::vector<Label>& labels, double val_fraction, Rng& rng,
                      std::vector<std::size_t>& train_idx, std::vector<std::size_t>& val_idx);

TrainResult train(const std::vector<FeatureSegment>& features, const TrainConfig& cfg);

// Inference-mode class probabilities, rows sum to 1.
std::vector<std::vector<double>> predict(Model& model,
                                         const std::vector<FeatureSegment>& features,
                                         std::size_t batch_size = 128, unsigned threads = 1);

Tensor3 segments_to_tensor(const std::vector<FeatureSegment>& features,
                           const std::vector<std::size_t>& indices);

std::string format_history(const std::vector<EpochStats>& history, std::size_t train_count,
                           std::size_t val_count);

}  // namespace mpcnn
