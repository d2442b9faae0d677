#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "shiftmmd/matrix.hpp"
#include "shiftmmd/rng.hpp"
#include "shiftmmd/tensor.hpp"

namespace shiftmmd {

struct MlpSpec {
    int input_dim = 0;
    std::vector<int> hidden_sizes;
    int output_dim = 1;

    void validate(bool require_hidden) const;
};

// ReLU MLP: a stack of hidden layers plus a linear output layer. The hidden
// stack plays the feature-extractor role; the output layer is the prediction
// head (or the mask-logit head for the masker).
class Mlp {
public:
    Mlp() = default;

    // Glorot-uniform weights, zero biases; each layer draws from its own
    // derived stream so parameter values do not depend on sibling layers.
    static Mlp init(const MlpSpec& spec, std::uint64_t seed);

    const MlpSpec& spec() const { return spec_; }

    // Tape forward through the full network. When hidden_out is non-null it
    // receives the post-activation hidden tensors in order.
    Tensor forward(Tape& tape, Tensor input, std::vector<Tensor>* hidden_out = nullptr);
    // Tape forward through hidden layers only (the embedding).
    Tensor forward_features(Tape& tape, Tensor input, std::vector<Tensor>* hidden_out = nullptr);
    // Head applied to an embedding.
    Tensor forward_head(Tape& tape, Tensor embedding);

    // Plain-matrix forward for evaluation; no tape, no gradients.
    Matrix predict(const Matrix& input) const;
    Matrix embed(const Matrix& input) const;

    std::vector<Variable*> params();             // all layers
    std::vector<Variable*> feature_params();     // hidden stack only
    std::vector<Variable*> head_params();        // output layer only
    int param_count() const;

    int layer_count() const { return static_cast<int>(weights_.size()); }
    const Matrix& layer_weight(int layer) const { return weights_[static_cast<std::size_t>(layer)].value; }
    const Matrix& layer_bias(int layer) const { return biases_[static_cast<std::size_t>(layer)].value; }

private:
    MlpSpec spec_;
    // hidden layers then the output layer; weights_[k] is in x out.
    std::vector<Variable> weights_;
    std::vector<Variable> biases_;
};

// Masker f_M plus the downstream predictor (f_F hidden stack + f_P head).
struct ModelBundle {
    Mlp predictor;
    std::optional<Mlp> masker;
};

struct MaskerConfig {
    double tau_start = 0.1;
    double tau_end = 0.01;

    void validate() const;
};

// Geometric interpolation from tau_start at epoch 0 to tau_end at the final
// epoch; degenerate schedules return tau_start.
double anneal_tau(const MaskerConfig& config, int epoch, int total_epochs);

// Logistic noise log(u) - log(1-u) with u ~ Uniform(0,1), one draw per entry.
Matrix sample_logistic_noise(int rows, int cols, Rng& rng);

// Relaxed Bernoulli sample m = sigmoid((logits + noise) / tau); differentiable
// w.r.t. logits with the noise held fixed.
Tensor relaxed_mask_from_noise(Tape& tape, Tensor logits, Matrix noise, double tau);
Tensor sample_relaxed_mask(Tape& tape, Tensor logits, double tau, Rng& rng);

// Masked copy of a dataset's feature matrix. In soft mode indicator_hat is
// max(I, m) in [0,1]; in hard mode m is thresholded at 0.5 first and
// features_prime holds the imputation value wherever indicator_hat = 1.
struct MaskedDataset {
    Matrix features_prime;
    Matrix indicator_hat;
};

MaskedDataset apply_mask(const Matrix& features, const Matrix& indicators, const Matrix& mask,
                         const std::vector<double>& impute, bool hard);

// Tape version used inside training: indicator_hat = I + (1-I) .* m and
// features_prime = X .* (1 - indicator_hat) + impute .* indicator_hat.
struct MaskedTensors {
    Tensor features_prime;
    Tensor indicator_hat;
};

MaskedTensors apply_mask_soft(Tape& tape, Tensor features, Tensor indicators, Tensor mask,
                              const std::vector<double>& impute);

} // namespace shiftmmd
