#include "shiftmmd/train.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "shiftmmd/errors.hpp"
#include "shiftmmd/rng.hpp"

namespace shiftmmd {

Method parse_method(const std::string& name) {
    if (name == "baseline") return Method::baseline;
    if (name == "mmd_repr") return Method::mmd_repr;
    if (name == "mmd_mask") return Method::mmd_mask;
    if (name == "mmd_hybrid") return Method::mmd_hybrid;
    if (name == "dan") return Method::dan;
    if (name == "jan") return Method::jan;
    if (name == "kmm" || name == "weighted_baseline") return Method::weighted_baseline;
    throw ConfigError("unknown method: " + name);
}

std::string method_name(Method m) {
    switch (m) {
    case Method::baseline: return "baseline";
    case Method::mmd_repr: return "mmd_repr";
    case Method::mmd_mask: return "mmd_mask";
    case Method::mmd_hybrid: return "mmd_hybrid";
    case Method::dan: return "dan";
    case Method::jan: return "jan";
    case Method::weighted_baseline: return "kmm";
    }
    return "?";
}

void TrainingConfig::validate(bool needs_masker, bool needs_multi_layer) const {
    if (epochs < 1) throw ArgumentError("training requires at least one epoch");
    if (lambda < 0.0) throw ArgumentError("lambda must be nonnegative");
    if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
    if (batch_size < 0 || mmd_batch < 0) throw ArgumentError("batch sizes must be nonnegative");
    if (hidden_sizes.empty()) throw ConfigError("feature extractor needs hidden layers");
    kernel.validate();
    if (needs_masker) {
        masker.validate();
        if (masker_hidden.empty()) throw ConfigError("masker needs hidden layers");
        if (mask_multiplicity < 1) throw ConfigError("mask multiplicity must be >= 1");
    }
    if (needs_multi_layer && mmd_layers > static_cast<int>(hidden_sizes.size())) {
        throw ConfigError("dan/jan need at least " + std::to_string(mmd_layers) +
                          " hidden layers, got " + std::to_string(hidden_sizes.size()));
    }
    if (needs_multi_layer && mmd_layers < 1) throw ConfigError("mmd_layers must be >= 1");
}

namespace {

// Stream ids; every stochastic consumer owns one so that enabling or
// disabling a consumer never shifts another's draws.
constexpr std::uint64_t kPredictorInit = 1;
constexpr std::uint64_t kMaskerInit = 2;
constexpr std::uint64_t kBatchStream = 3;
constexpr std::uint64_t kMmdStream = 4;
constexpr std::uint64_t kNoiseStream = 5;
constexpr std::uint64_t kExportNoise = 6;

std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng) {
    if (batch_size <= 0 || batch_size >= n) {
        std::vector<int> all(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
        return {std::move(all)};
    }
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.below(i)]);
    }
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(n, start + batch_size);
        batches.emplace_back(idx.begin() + start, idx.begin() + end);
    }
    return batches;
}

std::vector<int> sample_with_replacement(int count, int upper, Rng& rng) {
    std::vector<int> rows(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        rows[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(upper)));
    }
    return rows;
}

// Weighted task loss: (1 / sum w) * sum_i w_i * loss_i. The unweighted case
// uses w = 1 so both paths share one code path (and one trajectory).
Tensor task_loss(Tape& tape, Tensor pred, const Matrix& targets, const Matrix& weights,
                 double weight_sum, Task task) {
    if (task == Task::regression) {
        Tensor diff = tape.add(pred, tape.negate(tape.constant_view(targets)));
        Tensor weighted = tape.mul(tape.constant_view(weights), tape.square(diff));
        return tape.scalar_mul(tape.sum_all(weighted), 1.0 / weight_sum);
    }
    // Stable binary cross-entropy on raw logits, fused.
    const Matrix& z = pred.value();
    Matrix out(1, 1);
    double acc = 0.0;
    for (int i = 0; i < z.rows(); ++i) {
        const double zi = z(i, 0);
        const double yi = targets(i, 0);
        const double li = std::max(zi, 0.0) - zi * yi + std::log1p(std::exp(-std::fabs(zi)));
        acc += weights(i, 0) * li;
    }
    out(0, 0) = acc / weight_sum;
    auto backward = [&targets, &weights, weight_sum](Tape& t, const std::vector<int>& in,
                                                     const Matrix& g) {
        if (!t.node_tracked(in[0])) return;
        const Matrix& logits = t.node_value(in[0]);
        Matrix dz(logits.rows(), logits.cols());
        const double g0 = g(0, 0);
        for (int i = 0; i < logits.rows(); ++i) {
            const double zi = logits(i, 0);
            const double s = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi))
                                       : std::exp(zi) / (1.0 + std::exp(zi));
            dz(i, 0) = g0 * weights(i, 0) * (s - targets(i, 0)) / weight_sum;
        }
        t.accumulate_grad(in[0], dz);
    };
    return tape.custom("bce_with_logits", {pred}, std::move(out), std::move(backward));
}

struct EpochAccumulator {
    double total = 0.0, task = 0.0, mmd = 0.0;
    int rows = 0;

    void add(double total_v, double task_v, double mmd_v, int batch_rows) {
        total += total_v * batch_rows;
        task += task_v * batch_rows;
        mmd += mmd_v * batch_rows;
        rows += batch_rows;
    }
};

Matrix ones_column(int n) { return Matrix(n, 1, 1.0); }

Matrix sigmoid_of(const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    const double* src = z.data();
    double* dst = out.data();
    for (std::size_t i = 0; i < z.size(); ++i) {
        dst[i] = src[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-src[i]))
                               : std::exp(src[i]) / (1.0 + std::exp(src[i]));
    }
    return out;
}

double median_of(std::vector<double> v) {
    if (v.empty()) throw ArgumentError("median of empty vector");
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// Embedding layers feeding the representation MMD term. Reuses the task
// batch's activations when the MMD pairing covers the whole batch, otherwise
// runs a second forward on the subsampled rows.
struct MmdEmbeddings {
    std::vector<Tensor> train_layers;
    std::vector<Tensor> test_layers;
};

MmdEmbeddings mmd_embeddings(Tape& tape, Mlp& predictor, const std::vector<Tensor>& batch_hidden,
                             const Matrix& batch_inputs, const Matrix& test_inputs,
                             int n_layers, int mmd_batch, bool full_batch, Rng& mmd_rng) {
    MmdEmbeddings out;
    const int bsz = batch_inputs.rows();
    const int n_test = test_inputs.rows();
    const bool reuse = mmd_batch <= 0 || mmd_batch >= bsz;

    if (reuse) {
        const int from = static_cast<int>(batch_hidden.size()) - n_layers;
        for (int l = 0; l < n_layers; ++l) {
            out.train_layers.push_back(batch_hidden[static_cast<std::size_t>(from + l)]);
        }
    } else {
        std::vector<int> rows = sample_with_replacement(mmd_batch, bsz, mmd_rng);
        std::vector<Tensor> hidden;
        predictor.forward_features(tape, tape.constant(gather_rows(batch_inputs, rows)), &hidden);
        const int from = static_cast<int>(hidden.size()) - n_layers;
        for (int l = 0; l < n_layers; ++l) {
            out.train_layers.push_back(hidden[static_cast<std::size_t>(from + l)]);
        }
    }

    std::vector<Tensor> hidden_te;
    if (mmd_batch <= 0 && full_batch) {
        predictor.forward_features(tape, tape.constant_view(test_inputs), &hidden_te);
    } else {
        const int want = mmd_batch > 0 ? mmd_batch : bsz;
        std::vector<int> rows = sample_with_replacement(want, n_test, mmd_rng);
        predictor.forward_features(tape, tape.constant(gather_rows(test_inputs, rows)), &hidden_te);
    }
    const int from = static_cast<int>(hidden_te.size()) - n_layers;
    for (int l = 0; l < n_layers; ++l) {
        out.test_layers.push_back(hidden_te[static_cast<std::size_t>(from + l)]);
    }
    return out;
}

Tensor representation_mmd(Tape& tape, Method method, const MmdEmbeddings& emb,
                          const KernelSpec& kernel) {
    if (method == Method::jan) return mmd2_joint(tape, emb.train_layers, emb.test_layers, kernel);
    return mmd2_multilayer(tape, emb.train_layers, emb.test_layers, kernel);
}

// Core loop shared by baseline / weighted / repr / dan / jan.
TrainedModel train_predictor_family(const Dataset& train, const Dataset* test,
                                    const std::vector<double>* sample_weights,
                                    const TrainingConfig& config) {
    const Method method = config.method;
    const bool multi = method == Method::dan || method == Method::jan;
    config.validate(false, multi);
    if (!train.has_target()) throw ArgumentError("training set has no targets");
    const int n = train.n();

    Matrix weights = sample_weights ? Matrix::column_vector(*sample_weights) : ones_column(n);
    if (weights.rows() != n) throw ArgumentError("weight vector length must equal n_train");
    for (int i = 0; i < n; ++i) {
        if (weights(i, 0) < 0.0) throw ArgumentError("sample weights must be nonnegative");
    }

    const Matrix inputs = model_inputs(train);
    const Matrix targets = Matrix::column_vector(train.target);
    Matrix test_inputs;
    const bool use_mmd =
        (method == Method::mmd_repr || multi) && config.lambda != 0.0 && test != nullptr;
    if (method == Method::mmd_repr || multi) {
        if (!test) throw ArgumentError("representation methods need a test set");
        test_inputs = model_inputs(*test);
    }
    const int n_layers = method == Method::mmd_repr || method == Method::baseline ||
                                 method == Method::weighted_baseline
                             ? 1
                             : config.mmd_layers;

    MlpSpec spec{inputs.cols(), config.hidden_sizes, 1};
    Mlp predictor = Mlp::init(spec, Rng::derive(config.seed, kPredictorInit));
    auto params = predictor.params();
    RmsPropState state(config.learning_rate, config.rms_decay, config.rms_eps);

    Rng batch_rng(Rng::derive(config.seed, kBatchStream));
    Rng mmd_rng(Rng::derive(config.seed, kMmdStream));

    TrainedModel model;
    model.meta = train.meta;
    model.target_transform = train.target_transform;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        EpochAccumulator acc;
        try {
            for (const auto& batch : make_batches(n, config.batch_size, batch_rng)) {
                const bool full = static_cast<int>(batch.size()) == n;
                const Matrix batch_inputs = full ? Matrix() : gather_rows(inputs, batch);
                const Matrix& x_mat = full ? inputs : batch_inputs;
                const Matrix batch_targets = full ? Matrix() : gather_rows(targets, batch);
                const Matrix& y_mat = full ? targets : batch_targets;
                const Matrix batch_weights = full ? Matrix() : gather_rows(weights, batch);
                const Matrix& w_mat = full ? weights : batch_weights;
                const double w_sum = sum_all_entries(w_mat);
                if (w_sum <= 0.0) throw ArgumentError("batch weight sum is zero");

                Tape tape;
                std::vector<Tensor> hidden;
                Tensor emb = predictor.forward_features(tape, tape.constant_view(x_mat), &hidden);
                Tensor pred = predictor.forward_head(tape, emb);
                Tensor task = task_loss(tape, pred, y_mat, w_mat, w_sum, config.task);
                Tensor total = task;
                double mmd_value = 0.0;
                if (use_mmd) {
                    MmdEmbeddings pairs =
                        mmd_embeddings(tape, predictor, hidden, x_mat, test_inputs, n_layers,
                                       config.mmd_batch, full, mmd_rng);
                    Tensor term = representation_mmd(tape, method, pairs, config.kernel);
                    mmd_value = term.value()(0, 0);
                    total = tape.add(task, tape.scalar_mul(term, config.lambda));
                }
                tape.backward(total);
                rmsprop_step(params, state);
                zero_grad(params);
                acc.add(total.value()(0, 0), task.value()(0, 0), mmd_value,
                        static_cast<int>(batch.size()));
            }
        } catch (const NumericError& e) {
            throw NumericError("training aborted at epoch " + std::to_string(epoch) + ": " +
                               e.what());
        }
        model.loss_trace.push_back(acc.total / acc.rows);
        model.task_trace.push_back(acc.task / acc.rows);
        model.mmd_trace.push_back(acc.mmd / acc.rows);
    }

    model.bundle.predictor = std::move(predictor);
    return model;
}

// One masker update: minimize MMD^2 between (X'_tr | I_hat) and (X_te | I_te)
// on a sampled row pairing. Returns the loss value.
double masker_step(Mlp& masker, RmsPropState& state, const Dataset& train, const Matrix& test_joint,
                   const std::vector<int>& batch, const TrainingConfig& config, double tau,
                   Rng& mmd_rng, Rng& noise_rng) {
    const int bsz = static_cast<int>(batch.size());
    const int msz = config.mmd_batch > 0 ? std::min(config.mmd_batch, bsz) : bsz;
    std::vector<int> rows_tr;
    if (msz < bsz) {
        std::vector<int> local = sample_with_replacement(msz, bsz, mmd_rng);
        rows_tr.reserve(local.size());
        for (int r : local) rows_tr.push_back(batch[static_cast<std::size_t>(r)]);
    } else {
        rows_tr = batch;
    }
    const Matrix x = gather_rows(train.features, rows_tr);
    const Matrix ind = gather_rows(train.indicators, rows_tr);

    Matrix test_rows;
    if (config.mmd_batch <= 0 && bsz == train.n()) {
        test_rows = test_joint;
    } else {
        test_rows = gather_rows(test_joint, sample_with_replacement(msz, test_joint.rows(), mmd_rng));
    }

    Tape tape;
    Tensor x_const = tape.constant_view(x);
    Tensor i_const = tape.constant_view(ind);
    Tensor logits = masker.forward(tape, tape.concat_cols(x_const, i_const));
    Matrix noise = sample_logistic_noise(x.rows(), x.cols(), noise_rng);
    Tensor mask = relaxed_mask_from_noise(tape, logits, std::move(noise), tau);
    MaskedTensors masked = apply_mask_soft(tape, x_const, i_const, mask, train.impute_vector());
    Tensor joint_tr = tape.concat_cols(masked.features_prime, masked.indicator_hat);
    Tensor loss = mmd2_biased(tape, joint_tr, tape.constant_view(test_rows), config.kernel);
    tape.backward(loss);
    auto params = masker.params();
    rmsprop_step(params, state);
    zero_grad(params);
    return loss.value()(0, 0);
}

// Soft-masked inputs for the downstream step; the masker forward runs outside
// any tape so no gradient reaches it from the predictor update.
Matrix masked_batch_inputs(Mlp& masker, const Matrix& x, const Matrix& ind,
                           const std::vector<double>& impute, double tau, Rng& noise_rng) {
    Matrix logits = masker.predict(hcat(x, ind));
    Matrix noise = sample_logistic_noise(logits.rows(), logits.cols(), noise_rng);
    double* pl = logits.data();
    const double* pn = noise.data();
    for (std::size_t i = 0; i < logits.size(); ++i) pl[i] = (pl[i] + pn[i]) / tau;
    Matrix mask = sigmoid_of(logits);
    MaskedDataset soft = apply_mask(x, ind, mask, impute, false);
    return hcat(soft.features_prime, soft.indicator_hat);
}

} // namespace

std::vector<double> TrainedModel::predict(const Dataset& data) const {
    Matrix out = bundle.predictor.predict(model_inputs(data));
    std::vector<double> v(static_cast<std::size_t>(out.rows()));
    for (int i = 0; i < out.rows(); ++i) v[static_cast<std::size_t>(i)] = out(i, 0);
    return v;
}

Matrix TrainedModel::embed(const Dataset& data) const {
    return bundle.predictor.embed(model_inputs(data));
}

TrainedModel train_baseline(const Dataset& train, const TrainingConfig& config) {
    TrainingConfig cfg = config;
    cfg.method = Method::baseline;
    return train_predictor_family(train, nullptr, nullptr, cfg);
}

TrainedModel train_weighted(const Dataset& train, const std::vector<double>& weights,
                            const TrainingConfig& config) {
    TrainingConfig cfg = config;
    cfg.method = Method::weighted_baseline;
    return train_predictor_family(train, nullptr, &weights, cfg);
}

TrainedModel train_mmd_repr(const Dataset& train, const Dataset& test,
                            const TrainingConfig& config) {
    TrainingConfig cfg = config;
    cfg.method = Method::mmd_repr;
    return train_predictor_family(train, &test, nullptr, cfg);
}

TrainedModel train_dan(const Dataset& train, const Dataset& test, const TrainingConfig& config) {
    TrainingConfig cfg = config;
    cfg.method = Method::dan;
    return train_predictor_family(train, &test, nullptr, cfg);
}

TrainedModel train_jan(const Dataset& train, const Dataset& test, const TrainingConfig& config) {
    TrainingConfig cfg = config;
    cfg.method = Method::jan;
    return train_predictor_family(train, &test, nullptr, cfg);
}

MaskTrainResult train_mmd_mask(const Dataset& train, const Dataset& test,
                               const TrainingConfig& config) {
    config.validate(true, false);
    const int d = train.dim();
    if (test.dim() != d) throw ArgumentError("train/test feature schema mismatch");

    MlpSpec mspec{2 * d, config.masker_hidden, d};
    Mlp masker = Mlp::init(mspec, Rng::derive(config.seed, kMaskerInit));
    RmsPropState state(config.learning_rate, config.rms_decay, config.rms_eps);
    Rng batch_rng(Rng::derive(config.seed, kBatchStream));
    Rng mmd_rng(Rng::derive(config.seed, kMmdStream));
    Rng noise_rng(Rng::derive(config.seed, kNoiseStream));

    const Matrix test_joint = model_inputs(test);
    TrainedModel masker_model;
    masker_model.meta = train.meta;
    masker_model.target_transform = train.target_transform;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double tau = anneal_tau(config.masker, epoch, config.epochs);
        EpochAccumulator acc;
        try {
            for (const auto& batch : make_batches(train.n(), config.batch_size, batch_rng)) {
                const double loss = masker_step(masker, state, train, test_joint, batch, config,
                                                tau, mmd_rng, noise_rng);
                acc.add(loss, 0.0, loss, static_cast<int>(batch.size()));
            }
        } catch (const NumericError& e) {
            throw NumericError("masker training aborted at epoch " + std::to_string(epoch) +
                               ": " + e.what());
        }
        masker_model.loss_trace.push_back(acc.total / acc.rows);
        masker_model.task_trace.push_back(0.0);
        masker_model.mmd_trace.push_back(acc.mmd / acc.rows);
    }

    Rng export_rng(Rng::derive(config.seed, kExportNoise));
    MaskedDataset masked = sample_hard_mask(masker, train, config.masker.tau_end, export_rng);
    masker_model.bundle.masker = std::move(masker);
    return {std::move(masker_model), std::move(masked)};
}

TrainedModel train_mmd_hybrid(const Dataset& train, const Dataset& test,
                              const TrainingConfig& config) {
    config.validate(!config.freeze_masker_zero, false);
    if (!train.has_target()) throw ArgumentError("training set has no targets");
    const int n = train.n();
    const int d = train.dim();
    if (test.dim() != d) throw ArgumentError("train/test feature schema mismatch");

    Mlp masker;
    RmsPropState masker_state(config.learning_rate, config.rms_decay, config.rms_eps);
    if (!config.freeze_masker_zero) {
        masker = Mlp::init(MlpSpec{2 * d, config.masker_hidden, d},
                           Rng::derive(config.seed, kMaskerInit));
    }

    MlpSpec pspec{2 * d, config.hidden_sizes, 1};
    Mlp predictor = Mlp::init(pspec, Rng::derive(config.seed, kPredictorInit));
    auto pparams = predictor.params();
    RmsPropState pstate(config.learning_rate, config.rms_decay, config.rms_eps);

    Rng batch_rng(Rng::derive(config.seed, kBatchStream));
    Rng mmd_rng(Rng::derive(config.seed, kMmdStream));
    Rng noise_rng(Rng::derive(config.seed, kNoiseStream));

    const Matrix plain_inputs = model_inputs(train);
    const Matrix targets = Matrix::column_vector(train.target);
    const Matrix test_inputs = model_inputs(test);
    const Matrix weights = ones_column(n);
    const std::vector<double> impute = train.impute_vector();
    const bool use_mmd = config.lambda != 0.0;

    TrainedModel model;
    model.meta = train.meta;
    model.target_transform = train.target_transform;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double tau =
            config.freeze_masker_zero ? config.masker.tau_end
                                      : anneal_tau(config.masker, epoch, config.epochs);
        EpochAccumulator acc;
        try {
            for (const auto& batch : make_batches(n, config.batch_size, batch_rng)) {
                const bool full = static_cast<int>(batch.size()) == n;

                if (!config.freeze_masker_zero) {
                    masker_step(masker, masker_state, train, test_inputs, batch, config, tau,
                                mmd_rng, noise_rng);
                }

                Matrix x_mat;
                if (config.freeze_masker_zero) {
                    x_mat = full ? plain_inputs : gather_rows(plain_inputs, batch);
                } else {
                    const Matrix bx = full ? train.features : gather_rows(train.features, batch);
                    const Matrix bi = full ? train.indicators : gather_rows(train.indicators, batch);
                    x_mat = masked_batch_inputs(masker, bx, bi, impute, tau, noise_rng);
                }
                const Matrix batch_targets = full ? Matrix() : gather_rows(targets, batch);
                const Matrix& y_mat = full ? targets : batch_targets;
                const Matrix batch_weights = full ? Matrix() : gather_rows(weights, batch);
                const Matrix& w_mat = full ? weights : batch_weights;

                Tape tape;
                std::vector<Tensor> hidden;
                Tensor emb = predictor.forward_features(tape, tape.constant_view(x_mat), &hidden);
                Tensor pred = predictor.forward_head(tape, emb);
                Tensor task = task_loss(tape, pred, y_mat, w_mat, sum_all_entries(w_mat),
                                        config.task);
                Tensor total = task;
                double mmd_value = 0.0;
                if (use_mmd) {
                    MmdEmbeddings pairs = mmd_embeddings(tape, predictor, hidden, x_mat,
                                                         test_inputs, 1, config.mmd_batch, full,
                                                         mmd_rng);
                    Tensor term = mmd2_biased(tape, pairs.train_layers[0], pairs.test_layers[0],
                                              config.kernel);
                    mmd_value = term.value()(0, 0);
                    total = tape.add(task, tape.scalar_mul(term, config.lambda));
                }
                tape.backward(total);
                rmsprop_step(pparams, pstate);
                zero_grad(pparams);
                acc.add(total.value()(0, 0), task.value()(0, 0), mmd_value,
                        static_cast<int>(batch.size()));
            }
        } catch (const NumericError& e) {
            throw NumericError("training aborted at epoch " + std::to_string(epoch) + ": " +
                               e.what());
        }
        model.loss_trace.push_back(acc.total / acc.rows);
        model.task_trace.push_back(acc.task / acc.rows);
        model.mmd_trace.push_back(acc.mmd / acc.rows);
    }

    model.bundle.predictor = std::move(predictor);
    if (!config.freeze_masker_zero) model.bundle.masker = std::move(masker);
    return model;
}

MaskedDataset sample_hard_mask(Mlp& masker, const Dataset& train, double tau, Rng& rng) {
    Matrix logits = masker.predict(model_inputs(train));
    Matrix noise = sample_logistic_noise(logits.rows(), logits.cols(), rng);
    double* pl = logits.data();
    const double* pn = noise.data();
    for (std::size_t i = 0; i < logits.size(); ++i) pl[i] = (pl[i] + pn[i]) / tau;
    return apply_mask(train.features, train.indicators, sigmoid_of(logits),
                      train.impute_vector(), true);
}

Dataset build_masked_training_set(Mlp& masker, const Dataset& train, double tau,
                                  std::uint64_t seed, int multiplicity, bool include_original) {
    if (multiplicity < 1) throw ArgumentError("mask multiplicity must be >= 1");
    Rng rng(Rng::derive(seed, kExportNoise));
    std::vector<Matrix> feats, inds;
    for (int k = 0; k < multiplicity; ++k) {
        MaskedDataset m = sample_hard_mask(masker, train, tau, rng);
        feats.push_back(std::move(m.features_prime));
        inds.push_back(std::move(m.indicator_hat));
    }
    if (include_original) {
        feats.push_back(train.features);
        inds.push_back(train.indicators);
    }
    const int copies = static_cast<int>(feats.size());
    Dataset out;
    out.meta = train.meta;
    out.target_transform = train.target_transform;
    out.features = Matrix(copies * train.n(), train.dim());
    out.indicators = Matrix(copies * train.n(), train.dim());
    if (train.has_target()) out.target.resize(static_cast<std::size_t>(copies) * train.target.size());
    for (int c = 0; c < copies; ++c) {
        for (int i = 0; i < train.n(); ++i) {
            for (int j = 0; j < train.dim(); ++j) {
                out.features(c * train.n() + i, j) = feats[static_cast<std::size_t>(c)](i, j);
                out.indicators(c * train.n() + i, j) = inds[static_cast<std::size_t>(c)](i, j);
            }
            if (train.has_target()) {
                out.target[static_cast<std::size_t>(c * train.n() + i)] =
                    train.target[static_cast<std::size_t>(i)];
            }
        }
    }
    return out;
}

double probe_lambda(const Dataset& train, const Dataset& test, TrainingConfig config) {
    config.lambda = 1.0;
    config.epochs = std::min(config.epochs, 50);
    TrainedModel probe;
    switch (config.method) {
    case Method::dan: probe = train_dan(train, test, config); break;
    case Method::jan: probe = train_jan(train, test, config); break;
    case Method::mmd_hybrid: probe = train_mmd_hybrid(train, test, config); break;
    default: probe = train_mmd_repr(train, test, config); break;
    }
    const double task_med = median_of(probe.task_trace);
    const double mmd_med = median_of(probe.mmd_trace);
    if (mmd_med < 1e-12) return 1.0;
    return task_med / mmd_med;
}

} // namespace shiftmmd
