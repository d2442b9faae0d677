#include "shiftmmd/models.hpp"

#include <cmath>
#include <utility>

#include "shiftmmd/errors.hpp"

namespace shiftmmd {

void MlpSpec::validate(bool require_hidden) const {
    if (input_dim < 1 || output_dim < 1) {
        throw ArgumentError("mlp spec: input and output dims must be >= 1");
    }
    for (int h : hidden_sizes) {
        if (h < 1) throw ArgumentError("mlp spec: hidden sizes must be >= 1");
    }
    if (require_hidden && hidden_sizes.empty()) {
        throw ArgumentError("mlp spec: at least one hidden layer required");
    }
}

Mlp Mlp::init(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate(false);
    Mlp net;
    net.spec_ = spec;
    std::vector<int> dims;
    dims.push_back(spec.input_dim);
    for (int h : spec.hidden_sizes) dims.push_back(h);
    dims.push_back(spec.output_dim);

    for (std::size_t layer = 0; layer + 1 < dims.size(); ++layer) {
        const int fan_in = dims[layer];
        const int fan_out = dims[layer + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        Rng rng(Rng::derive(seed, layer));
        Matrix w(fan_in, fan_out);
        for (int i = 0; i < fan_in; ++i) {
            for (int j = 0; j < fan_out; ++j) w(i, j) = rng.uniform(-bound, bound);
        }
        net.weights_.emplace_back(std::move(w));
        net.biases_.emplace_back(Matrix(1, fan_out));
    }
    return net;
}

Tensor Mlp::forward_features(Tape& tape, Tensor input, std::vector<Tensor>* hidden_out) {
    if (input.cols() != spec_.input_dim) {
        throw ShapeError("mlp forward: input has " + std::to_string(input.cols()) +
                         " columns, expected " + std::to_string(spec_.input_dim));
    }
    Tensor x = input;
    const std::size_t n_hidden = spec_.hidden_sizes.size();
    for (std::size_t layer = 0; layer < n_hidden; ++layer) {
        Tensor z = tape.add_rowvector_bias(tape.matmul(x, tape.leaf(weights_[layer])),
                                           tape.leaf(biases_[layer]));
        x = tape.relu(z);
        if (hidden_out) hidden_out->push_back(x);
    }
    return x;
}

Tensor Mlp::forward_head(Tape& tape, Tensor embedding) {
    const std::size_t last = weights_.size() - 1;
    return tape.add_rowvector_bias(tape.matmul(embedding, tape.leaf(weights_[last])),
                                   tape.leaf(biases_[last]));
}

Tensor Mlp::forward(Tape& tape, Tensor input, std::vector<Tensor>* hidden_out) {
    return forward_head(tape, forward_features(tape, input, hidden_out));
}

Matrix Mlp::embed(const Matrix& input) const {
    Matrix x = input;
    for (std::size_t layer = 0; layer < spec_.hidden_sizes.size(); ++layer) {
        Matrix z = matmul(x, weights_[layer].value);
        const Matrix& b = biases_[layer].value;
        for (int i = 0; i < z.rows(); ++i) {
            double* zi = z.row(i);
            for (int j = 0; j < z.cols(); ++j) {
                double v = zi[j] + b(0, j);
                zi[j] = v > 0.0 ? v : 0.0;
            }
        }
        x = std::move(z);
    }
    return x;
}

Matrix Mlp::predict(const Matrix& input) const {
    Matrix emb = embed(input);
    Matrix z = matmul(emb, weights_.back().value);
    const Matrix& b = biases_.back().value;
    for (int i = 0; i < z.rows(); ++i) {
        double* zi = z.row(i);
        for (int j = 0; j < z.cols(); ++j) zi[j] += b(0, j);
    }
    return z;
}

std::vector<Variable*> Mlp::params() {
    std::vector<Variable*> out;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
        out.push_back(&weights_[k]);
        out.push_back(&biases_[k]);
    }
    return out;
}

std::vector<Variable*> Mlp::feature_params() {
    std::vector<Variable*> out;
    for (std::size_t k = 0; k + 1 < weights_.size(); ++k) {
        out.push_back(&weights_[k]);
        out.push_back(&biases_[k]);
    }
    return out;
}

std::vector<Variable*> Mlp::head_params() {
    return {&weights_.back(), &biases_.back()};
}

int Mlp::param_count() const {
    int count = 0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
        count += static_cast<int>(weights_[k].value.size() + biases_[k].value.size());
    }
    return count;
}

void MaskerConfig::validate() const {
    if (!(tau_end > 0.0) || tau_end > tau_start) {
        throw ArgumentError("masker config requires 0 < tau_end <= tau_start");
    }
}

double anneal_tau(const MaskerConfig& config, int epoch, int total_epochs) {
    config.validate();
    if (total_epochs < 2) return config.tau_start;
    if (epoch < 0 || epoch >= total_epochs) {
        throw ArgumentError("anneal_tau: epoch out of range");
    }
    const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
    return config.tau_start * std::pow(config.tau_end / config.tau_start, frac);
}

Matrix sample_logistic_noise(int rows, int cols, Rng& rng) {
    Matrix noise(rows, cols);
    double* p = noise.data();
    for (std::size_t i = 0; i < noise.size(); ++i) {
        double u = rng.uniform_open();
        p[i] = std::log(u) - std::log1p(-u);
    }
    return noise;
}

Tensor relaxed_mask_from_noise(Tape& tape, Tensor logits, Matrix noise, double tau) {
    if (tau <= 0.0) throw ArgumentError("relaxed mask: tau must be positive");
    return tape.sigmoid(tape.logistic_noise_shift(logits, std::move(noise), tau));
}

Tensor sample_relaxed_mask(Tape& tape, Tensor logits, double tau, Rng& rng) {
    return relaxed_mask_from_noise(tape, logits,
                                   sample_logistic_noise(logits.rows(), logits.cols(), rng), tau);
}

MaskedDataset apply_mask(const Matrix& features, const Matrix& indicators, const Matrix& mask,
                         const std::vector<double>& impute, bool hard) {
    if (!features.same_shape(indicators) || !features.same_shape(mask)) {
        throw ShapeError("apply_mask: features " + features.shape_str() + ", indicators " +
                         indicators.shape_str() + ", mask " + mask.shape_str());
    }
    if (static_cast<int>(impute.size()) != features.cols()) {
        throw ShapeError("apply_mask: imputation vector length mismatch");
    }
    MaskedDataset out;
    out.features_prime = Matrix(features.rows(), features.cols());
    out.indicator_hat = Matrix(features.rows(), features.cols());
    for (int i = 0; i < features.rows(); ++i) {
        for (int j = 0; j < features.cols(); ++j) {
            double m = mask(i, j);
            if (hard) m = m >= 0.5 ? 1.0 : 0.0;
            const double ind = std::max(indicators(i, j), m);
            out.indicator_hat(i, j) = ind;
            out.features_prime(i, j) = features(i, j) * (1.0 - ind) + impute[j] * ind;
        }
    }
    return out;
}

MaskedTensors apply_mask_soft(Tape& tape, Tensor features, Tensor indicators, Tensor mask,
                              const std::vector<double>& impute) {
    const int n = features.rows(), d = features.cols();
    if (static_cast<int>(impute.size()) != d) {
        throw ShapeError("apply_mask_soft: imputation vector length mismatch");
    }
    // With I in {0,1}, max(I, m) == I + (1-I) .* m, which keeps the graph in
    // elementwise primitives.
    Matrix one_minus_i(n, d);
    Matrix impute_rows(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            one_minus_i(i, j) = 1.0 - indicators.value()(i, j);
            impute_rows(i, j) = impute[j];
        }
    }
    Tensor keep = tape.constant(std::move(one_minus_i));
    Tensor ind_hat = tape.add(indicators, tape.mul(keep, mask));
    Matrix ones(n, d, 1.0);
    Tensor one_minus_hat = tape.add(tape.constant(std::move(ones)), tape.negate(ind_hat));
    Tensor masked = tape.add(tape.mul(features, one_minus_hat),
                             tape.mul(tape.constant(std::move(impute_rows)), ind_hat));
    return {masked, ind_hat};
}

} // namespace shiftmmd
